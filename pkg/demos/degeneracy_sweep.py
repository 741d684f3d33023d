"""Fidelity against Ising strength at a 50 kHz detuning, with sideband-degeneracy flags."""
import numpy as np

from itoffoli.analysis import degeneracy_flags, fidelity_report
from itoffoli.config import resolve
from itoffoli.evolution import itoffoli_sequence


def main():
    print(" J/4pi [kHz]   F        flags (controls, mode, k)")
    for half_j in np.arange(2.4, 3.81, 0.1):
        spec = resolve({"n_ions": 3, "delta_cm_khz": 50, "J_khz": 2 * half_j, "ratio_J_over_g": 2})
        f = fidelity_report(itoffoli_sequence(spec.gate)).average_fidelity
        flags = sorted({(fl.control_bits, fl.mode, fl.order) for fl in degeneracy_flags(spec.gate)})
        print(f"  {half_j:5.2f}      {f:.4f}   {flags if flags else ''}")


if __name__ == "__main__":
    main()
