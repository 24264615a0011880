################################################################################
import unittest, os, json, tempfile

import torch

try:
    import import_header
except ModuleNotFoundError:
    import tests.import_header
################################################################################

torch.set_default_dtype(torch.float64)

from ncbmo_torch import linalg
from ncbmo_torch.cli import (
    COMMAND_FNS,
    CSV_COLUMNS,
    SCHEMA,
    RunConfig,
    parse_filtration_spec,
    main,
    run,
)
from ncbmo_torch.errors import ParseError, IoError, NotIncreasing
from ncbmo_torch.norms import bmo_p
from ncbmo_torch.utils import sub_seed
from ncbmo_torch.verify import ensemble

QUBIT = """# identity on M_2 over the scalars
dim = 2
density.diag = 0.5, 0.5
level = (1,2)
level = full
element = identity
"""

TENSOR = """density.factor = 0.3, 0; 0, 0.7
density.factor = 0.6, 0.1+0.05j; 0.1-0.05j, 0.4
level = (1,4)
level = (1,2),(1,2)    # diagonal of the first factor
level = full
"""


class SpecTest(unittest.TestCase):
    def setUp(self):
        self.dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.dir.cleanup()

    def write(self, text, name="spec.txt"):
        path = os.path.join(self.dir.name, name)
        with open(path, "w") as fp:
            fp.write(text)
        return path

    def test_qubit(self):
        fs = parse_filtration_spec(self.write(QUBIT))
        self.assertEqual(fs.filtration.nlevels, 2)
        self.assertTrue(float(torch.norm(fs.element - torch.eye(2))) < 1e-14)

    def test_kron_density(self):
        fs = parse_filtration_spec(self.write(TENSOR))
        self.assertEqual(fs.state.dim, 4)
        self.assertEqual(fs.filtration.nlevels, 3)
        self.assertTrue(fs.element is None)

    def test_trace(self):
        path = self.write("dim = 2\ndensity.diag = 0.5, 0.6\nlevel = full\n")
        with self.assertRaises(ParseError) as cm:
            parse_filtration_spec(path)
        self.assertEqual(cm.exception.line, 2)
        self.assertTrue("trace(density) = 1" in str(cm.exception))

    def test_line_numbers(self):
        cases = [
            ("dim = 2\n\nbogus = 1\n", 3),
            ("dim = two\n", 1),
            ("dim = 2\ndensity.diag = 0.5, x\n", 2),
            ("dim = 2\ndensity.diag = 0.5, 0.5\nlevel = (1,2\n,3)\n", 4),
            ("dim = 2\ndensity.diag = 0.5, 0.5\nlevel = (3,1)\n", 3),
            ("density.matrix = 1, 0; 0\n", 1),
        ]
        for (text, line) in cases:
            with self.assertRaises(ParseError) as cm:
                parse_filtration_spec(self.write(text))
            self.assertEqual(cm.exception.line, line, text)

    def test_missing_pieces(self):
        with self.assertRaises(ParseError):
            parse_filtration_spec(self.write("dim = 2\nlevel = full\n"))
        with self.assertRaises(ParseError):
            parse_filtration_spec(self.write("density.diag = 0.5, 0.5\n"))
        with self.assertRaises(IoError):
            parse_filtration_spec(os.path.join(self.dir.name, "missing.txt"))

    def test_not_increasing(self):
        path = self.write("density.diag = 0.5, 0.5\nlevel = full\nlevel = (1,2)\n")
        with self.assertRaises(NotIncreasing):
            parse_filtration_spec(path)

    def test_trace_between_tolerances(self):
        path = self.write("dim = 2\n# weights\ndensity.diag = 0.5, 0.5000000001\nlevel = full\n")
        with self.assertRaises(ParseError) as cm:
            parse_filtration_spec(path)
        self.assertEqual(cm.exception.line, 3)

    def test_state_errors_carry_line(self):
        path = self.write("dim = 2\ndensity.diag = 1.0, 0.0\nlevel = full\n")
        with self.assertRaises(ParseError) as cm:
            parse_filtration_spec(path)
        self.assertEqual(cm.exception.line, 2)


class RunTest(unittest.TestCase):
    def setUp(self):
        self.dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.dir.cleanup()

    def path(self, name):
        return os.path.join(self.dir.name, name)

    def test_config(self):
        with self.assertRaises(ValueError):
            RunConfig("frobnicate")
        with self.assertRaises(ValueError):
            RunConfig("jn", format="xml")
        vc = RunConfig("jn", p_list=(1.0, 3.0, float("inf"))).verify_config()
        self.assertEqual(vc.p_list, (3.0,))

    def test_counterexample(self):
        out = self.path("ce.json")
        self.assertEqual(main(["counterexample", "--n", "2,4", "--p", "4", "--out", out]), 0)
        with open(out) as fp:
            payload = json.load(fp)
        self.assertEqual(payload["schema"], SCHEMA)
        self.assertTrue(payload["passed"])
        table = payload["reports"]["counterexample"]["table"]
        self.assertTrue(abs(table[1]["lp_norm"] - 2.0 ** 0.5) < 1e-8)

    def test_json_deterministic(self):
        texts = []
        for name in ("a.json", "b.json"):
            out = self.path(name)
            main(["counterexample", "--n", "2", "--p", "3,4", "--out", out])
            with open(out) as fp:
                texts.append(fp.read())
        self.assertEqual(texts[0], texts[1])

    def test_csv(self):
        out = self.path("ce.csv")
        self.assertEqual(main(["counterexample", "--n", "2", "--p", "4", "--format", "csv", "--out", out]), 0)
        with open(out) as fp:
            lines = fp.read().splitlines()
        self.assertEqual(lines[0], ",".join(CSV_COLUMNS))
        self.assertTrue("counterexample,summary,0,passed,True" in lines)

    def test_jn_identity(self):
        spec = self.path("qubit.txt")
        with open(spec, "w") as fp:
            fp.write(QUBIT)
        out = self.path("jn.json")
        code = main(["jn", "--spec", spec, "--p", "4", "--restarts", "2", "--max-it", "20", "--out", out])
        self.assertEqual(code, 0)
        with open(out) as fp:
            rec = json.load(fp)["reports"]["jn"]["records"][0]
        self.assertTrue(abs(rec["ratio"] - 1.0) < 1e-10)
        self.assertTrue(abs(rec["ratio_p"] - 0.25) < 1e-10)

    def test_errors(self):
        spec = self.path("bad.txt")
        with open(spec, "w") as fp:
            fp.write("dim = 2\ndensity.diag = 0.5, 0.6\nlevel = full\n")
        self.assertEqual(main(["jn", "--spec", spec]), 2)
        self.assertEqual(main(["norms", "--ensemble", "0"]), 2)
        with self.assertRaises(SystemExit):
            main(["counterexample", "--p", "0.5"])

    def test_interval(self):
        out = self.path("iv.json")
        code = run(RunConfig("interval", p_list=(4.0,), pairs=5, seed=1, out=out))
        self.assertEqual(code, 0)
        with open(out) as fp:
            rep = json.load(fp)["reports"]["interval"]
        self.assertEqual(rep["records"][1]["witness_failures"], 0)

    def test_norms_positive_witness(self):
        spec = self.path("tensor.txt")
        with open(spec, "w") as fp:
            fp.write(TENSOR)
        config = RunConfig("norms", spec=spec, p_list=(4.0,), restarts=2, max_it=20, positive_witness=True)
        rec = COMMAND_FNS["norms"](config)["norms"].records[0]
        mart = ensemble({"spec": parse_filtration_spec(spec).filtration}, 1, 0)[0][1]
        kw = dict(restarts=2, seed=sub_seed(0, 0), max_it=20)
        positive = bmo_p(mart, 4.0, positive=True, **kw)
        self.assertTrue(abs(rec["bmo_p[4]"] - positive.value) < 1e-12)
        self.assertTrue(linalg.is_psd(positive.witness["a"]))


if __name__ == "__main__":
    unittest.main(verbosity=2)
