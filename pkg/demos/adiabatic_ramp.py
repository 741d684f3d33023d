"""Switching the spin-phonon coupling on and off: sin^2 ramp against a sudden quench."""
from itoffoli.analysis import adiabaticity_report
from itoffoli.config import parse_config
from itoffoli.hamiltonians import RampProfile


def main():
    cfg = parse_config(preset="fig2").gate
    for shape in ("sin2", "quench"):
        rep = adiabaticity_report(cfg.with_(ramp=RampProfile(shape)))
        print(f"{shape:7s} dressed excitation {rep.dressed_excitation:.2e}  "
              f"residual phonons {rep.residual_population:.2e}  "
              f"max excursion {rep.max_excursion:.3f}")


if __name__ == "__main__":
    main()
