#!/usr/bin/env python3
"""Smoke test for the nfdiag_py extension module.

Builds nothing itself: compile the module first with

    cargo build -p nfdiag-python --release

then run `python3 python/smoke_test.py`.  The script locates the compiled
cdylib under target/, stages it under the importable name, and exercises the
bound surface on the built-in examples.
"""

import json
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def locate_cdylib() -> pathlib.Path:
    candidates = [
        ROOT / "target" / "release" / "libnfdiag_py.so",
        ROOT / "target" / "debug" / "libnfdiag_py.so",
        ROOT / "target" / "release" / "libnfdiag_py.dylib",
        ROOT / "target" / "debug" / "libnfdiag_py.dylib",
    ]
    for c in candidates:
        if c.exists():
            return c
    sys.exit(
        "nfdiag_py cdylib not found; run `cargo build -p nfdiag-python` first"
    )


def stage_module(lib: pathlib.Path, stage_dir: pathlib.Path) -> None:
    suffix = ".so" if lib.suffix == ".so" else ".so"  # CPython accepts .so on macOS too
    shutil.copy(lib, stage_dir / f"nfdiag_py{suffix}")
    sys.path.insert(0, str(stage_dir))


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        stage_module(locate_cdylib(), pathlib.Path(tmp))
        import nfdiag_py

        # Validation: a bad tree reports its violations, a preset is clean.
        bad = json.dumps(
            {
                "n": 2,
                "vertices": [
                    {"id": "b", "parent": "a", "tau": 2, "gamma": 1, "beta": 2, "alpha": 2}
                ],
                "pairs": [],
            }
        )
        violations = nfdiag_py.validate(bad)
        assert violations, "expected violations for gamma = 1"
        print(f"validate: {len(violations)} violations reported for the bad tree")

        ex1 = nfdiag_py.preset("ex1")
        ex2 = nfdiag_py.preset("ex2")
        assert nfdiag_py.validate(ex1) == []

        # Tree surface.
        t1 = nfdiag_py.Tree(ex1)
        assert t1.n1 == 2 and t1.order() == 2
        assert t1.letters() == ["b.0"]
        t2 = nfdiag_py.Tree(ex2)
        assert t2.n1 == 3 and t2.order() == 3
        assert t2.periods() == {"b": (3, 1)}
        phi = t2.phi()
        assert phi["b.0"] == "c * b.1", phi
        print(f"trees: ex1 order {t1.order()}, ex2 order {t2.order()}, phi ok")

        # Diagonalisation of the order-2 example: one generator, eigenvalue -1.
        result = nfdiag_py.diagonalize(ex1, sizes=[2, 3], samples=2, seed=0)
        gens = result["generators"]
        assert len(gens) == 1 and gens[0]["eigenvalue"] == "-1", gens
        assert result["report"]["summary"] == "pass"
        assert "b.0" in result["inverse"]
        print(f"diagonalize ex1: eigenvalue {gens[0]['eigenvalue']}, report pass")

        # Order-3 example: eigenvalues omega^2 and omega.
        result = nfdiag_py.diagonalize(ex2, sizes=[2, 3], samples=2, seed=0)
        eigs = [g["eigenvalue"] for g in result["generators"]]
        assert eigs == ["zeta(6)^4", "zeta(6)^2"], eigs
        print(f"diagonalize ex2: eigenvalues {eigs}")

        # Verification report and a negative control.
        report = nfdiag_py.verify(ex2, sizes=[2, 3], samples=2, seed=1)
        assert report["summary"] == "pass"
        broken = nfdiag_py.verify(ex2, sizes=[2], samples=1, inject_fault="wrong-xi")
        assert broken["summary"] == "fail"
        print("verify: pass on clean run, fail under fault injection")

        print("smoke test OK")


if __name__ == "__main__":
    main()
