"""Regenerate the committed golden dumps (run from the repo root)."""

import pathlib

from pnrte.equations import build_cda, build_pn, dump_equations
from pnrte.stencil import compile_program, dump_program

GOLDEN = pathlib.Path(__file__).resolve().parent.parent / "tests" / "golden"


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    for N in (1, 2, 3):
        for dim in (2, 3):
            eqs = build_pn(N, dim)
            (GOLDEN / f"pn_N{N}_{dim}d.txt").write_text(dump_equations(eqs))
    (GOLDEN / "cda_3d.txt").write_text(dump_equations(build_cda(3)))
    (GOLDEN / "stencil_p1_3d.txt").write_text(
        dump_program(compile_program(build_pn(1, 3))))
    (GOLDEN / "stencil_cda_3d.txt").write_text(
        dump_program(compile_program(build_cda(3))))
    print(f"wrote goldens to {GOLDEN}")


if __name__ == "__main__":
    main()
