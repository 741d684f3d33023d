"""Three-ion gate on the centre-of-mass mode: process matrix and target-pair dynamics.

Run ``python demos/fig2_process.py [--plot]``.
"""
import argparse

import numpy as np

from itoffoli.analysis import align_global_phase, fidelity_report, process_matrix
from itoffoli.config import parse_config
from itoffoli.evolution import itoffoli_sequence
from itoffoli.spinmodel import ideal_itoffoli, target_pair


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--plot", action="store_true", help="show matplotlib figures")
    args = ap.parse_args()

    cfg = parse_config(preset="fig2").gate
    a, b = target_pair(cfg.n_qubits, cfg.target_index)
    res = itoffoli_sequence(cfg, trace_inputs=[a, b])
    rep = fidelity_report(res)
    ideal = ideal_itoffoli(cfg.n_qubits, cfg.target_index)
    u = align_global_phase(process_matrix(res.columns, cfg.space.qubit_dim), ideal)

    print(f"Omega/2pi = {cfg.omega_rabi / 2e3 / np.pi:.3f} kHz, lambda_c = {cfg.lambda_c:.4f}, "
          f"gate {cfg.t_total * 1e6:.0f} us, {res.wall_time:.2f} s")
    print(f"average fidelity {rep.average_fidelity:.5f}, leakage {rep.leakage:.1e}")
    np.set_printoptions(precision=3, suppress=True, linewidth=120)
    print("Re U\n", u.real)
    print("Im U\n", u.imag)

    if args.plot:
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(1, 3, figsize=(13, 4))
        ax[0].imshow(u.real, cmap="RdBu", vmin=-1, vmax=1)
        ax[0].set_title("Re U")
        ax[1].imshow(u.imag, cmap="RdBu", vmin=-1, vmax=1)
        ax[1].set_title("Im U")
        for idx in (a, b):
            tr = res.traces[idx].as_arrays()
            ax[2].plot(tr["x"][:, 0], tr["p"][:, 0], label=format(idx, "03b"))
        ax[2].set_xlabel("<x>")
        ax[2].set_ylabel("<p>")
        ax[2].legend()
        plt.tight_layout()
        plt.show()


if __name__ == "__main__":
    main()
