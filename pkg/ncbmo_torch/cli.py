##^# library imports ###########################################################
import argparse, csv, io, json, logging, math, sys
from dataclasses import dataclass, asdict
from typing import List, NamedTuple, Optional, Sequence

import torch
from tqdm import tqdm

from . import __version__
from .algebra import State, Subalgebra, Filtration, block_subalgebra, full_algebra, validate_filtration, TRACE_TOL
from .errors import NcbmoError, ParseError, IoError
from .interval import (
    StepFunction,
    read_step_function,
    interval_bmo_c,
    interval_bmo_c_sqrt,
    interval_bmo,
    interval_bmo_sqrt,
    extended_bmo_p,
    interval_bmo_p_lower,
    interval_comparison_check,
)
from .martingale import decompose
from .norms import (
    bmo,
    bmo_c,
    bmo_r,
    bmo_c_centered,
    bmo_p,
    hp_c,
    lp_c_mo,
    conditioned_moment,
)
from .utils import CDTYPE, TablePrinter, to_jsonable, make_generator, randn_complex, sub_seed
from . import verify
from .verify import VerifyConfig, VerifyReport

logger = logging.getLogger(__name__)

SCHEMA = 1
COMMANDS = ("norms", "jn", "inclusion", "largedev", "counterexample", "interval", "sweep", "axioms")
CSV_COLUMNS = ("report", "section", "index", "key", "value")

##$#############################################################################
##^# filtration spec files #####################################################
class FiltrationSpec(NamedTuple):
    filtration: Filtration
    state: State
    levels: List[Subalgebra]
    element: Optional[torch.Tensor]


def _parse_matrix(text, path, lineno):
    try:
        rows = [[complex(tok.strip().replace(" ", "")) for tok in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise ParseError("malformed complex entry", path=path, line=lineno)
    if len(set(len(r) for r in rows)) != 1:
        raise ParseError("rows of unequal length", path=path, line=lineno)
    return torch.tensor(rows, dtype=CDTYPE)


def _parse_blocks(text, path, lineno):
    try:
        body = text.replace(" ", "").strip("()")
        return [tuple(int(v) for v in blk.split(",")) for blk in body.split("),(")]
    except ValueError:
        raise ParseError("level must be 'full' or a list of (d,m) blocks", path=path, line=lineno)


def parse_filtration_spec(path) -> FiltrationSpec:
    """Read a filtration spec file.

    One ``key = value`` per line, ``#`` starts a comment::

        dim = 4
        density.diag = 0.1, 0.2, 0.3, 0.4      # or density.matrix / density.factor
        level = (1,4)
        level = (1,2),(1,2)
        level = full
        element = identity                     # optional; or rows "a,b;c,d"

    ``density.factor`` lines are combined by Kronecker product; ``level`` lines
    list blocks ``(d, m)`` meaning ``M_d (x) 1_m``.
    """
    try:
        with open(path, "r") as fp:
            lines = fp.readlines()
    except OSError as e:
        raise IoError(str(e), path=str(path))
    dim, density, density_line, factors = None, None, None, []
    levels, element = [], None
    for (lineno, raw) in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if len(line) == 0:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", path=path, line=lineno)
        key, value = [s.strip() for s in line.split("=", 1)]
        if key == "dim":
            try:
                dim = int(value)
            except ValueError:
                raise ParseError("dim must be an integer", path=path, line=lineno)
        elif key == "density.diag":
            try:
                w = [float(v) for v in value.split(",")]
            except ValueError:
                raise ParseError("malformed diagonal entry", path=path, line=lineno)
            density, density_line = torch.diag(torch.tensor(w, dtype=torch.float64)).to(CDTYPE), lineno
        elif key == "density.matrix":
            density, density_line = _parse_matrix(value, path, lineno), lineno
        elif key == "density.factor":
            factors.append(_parse_matrix(value, path, lineno))
            density_line = lineno
        elif key == "level":
            if value == "full":
                levels.append(("full", lineno))
            else:
                levels.append((_parse_blocks(value, path, lineno), lineno))
        elif key == "element":
            element = value if value == "identity" else _parse_matrix(value, path, lineno)
        else:
            raise ParseError("unknown key [%s]" % key, path=path, line=lineno)
    if len(factors) > 0:
        density = factors[0]
        for F in factors[1:]:
            density = torch.kron(density, F)
    if density is None:
        raise ParseError("no density given", path=path)
    dim = density.shape[-1] if dim is None else dim
    if density.shape != (dim, dim):
        raise ParseError("density is not %d x %d" % (dim, dim), path=path, line=density_line)
    tr = complex(torch.trace(density))
    if abs(tr.real - 1.0) > TRACE_TOL or abs(tr.imag) > TRACE_TOL:
        raise ParseError("density must satisfy trace(density) = 1", path=path, line=density_line)
    try:
        state = State(density)
    except NcbmoError as e:
        raise ParseError(str(e), path=path, line=density_line)

    algs = []
    for (lvl, lineno) in levels:
        try:
            algs.append(full_algebra(dim) if lvl == "full" else block_subalgebra(lvl, dim))
        except NcbmoError as e:
            raise ParseError(str(e), path=path, line=lineno)
    if len(algs) == 0:
        raise ParseError("no level given", path=path)
    filt = validate_filtration(state, algs)
    if isinstance(element, str):
        element = filt.identity()
    elif element is not None and element.shape != (dim, dim):
        raise ParseError("element is not %d x %d" % (dim, dim), path=path)
    return FiltrationSpec(filt, state, algs, element)


##$#############################################################################
##^# run configuration #########################################################
@dataclass
class RunConfig:
    command: str
    spec: Optional[str] = None
    step: Optional[str] = None
    p_list: Sequence[float] = (3.0, 4.0, 6.0, 8.0, 12.0)
    eta: Optional[float] = None
    t_list: Sequence[float] = (1.0, 2.0, 4.0, 8.0)
    n_list: Sequence[int] = (2, 4, 8)
    seed: int = 0
    ensemble: int = 1
    pairs: int = 100
    restarts: int = 8
    max_it: int = 300
    c_jn: float = 16.0
    format: str = "json"
    out: Optional[str] = None
    positive_witness: bool = False
    progress: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError("unknown command [%s]" % self.command)
        if self.format not in ("json", "csv"):
            raise ValueError("unknown format [%s]" % self.format)
        if self.ensemble < 1:
            raise ValueError("ensemble must be >= 1")

    def to_dict(self):
        return asdict(self)

    def verify_config(self) -> VerifyConfig:
        kw = dict(
            p_list=tuple(p for p in self.p_list if 2.0 <= p < math.inf),
            t_list=tuple(self.t_list),
            ensemble_size=self.ensemble,
            seed=self.seed,
            c_jn=self.c_jn,
            restarts=self.restarts,
            max_it=self.max_it,
            positive_witness=self.positive_witness,
            progress=self.progress,
        )
        if self.eta is not None:
            kw.update(eta=self.eta, eta_list=(self.eta,))
        return VerifyConfig(**kw)


##$#############################################################################
##^# commands ##################################################################
def _samples(config: RunConfig):
    """``(label, mart)`` pairs from the spec file (or the standard filtrations)."""
    if config.spec is not None:
        fs = parse_filtration_spec(config.spec)
        if fs.element is not None and config.ensemble == 1:
            return [("element", decompose(fs.element, fs.filtration))]
        return verify.ensemble({"spec": fs.filtration}, config.ensemble, config.seed)
    return verify.ensemble(verify.standard_filtrations(), config.ensemble, config.seed)


def _cmd_norms(config: RunConfig):
    rep = VerifyReport("norms")
    eta = 0.5 if config.eta is None else config.eta
    for (label, mart) in _samples(config):
        rec = dict(sample=label, bmo_c=bmo_c(mart), bmo_r=bmo_r(mart), bmo=bmo(mart), bmo_c_centered=bmo_c_centered(mart))
        for (i, p) in enumerate(config.p_list):
            key = "%g" % p
            rec["lp_norm[%s]" % key] = float(mart.filtration.lp_norm(mart.x, p, eta))
            rec["hp_c[%s]" % key] = hp_c(mart, p, eta)
            if math.isfinite(p):
                rec["conditioned_moment[%s]" % key] = conditioned_moment(mart, p)
            if p >= 2.0:
                nr = bmo_p(
                    mart,
                    p,
                    restarts=config.restarts,
                    seed=sub_seed(config.seed, i),
                    max_it=config.max_it,
                    positive=config.positive_witness,
                )
                rec["bmo_p[%s]" % key], rec["bmo_p_upper[%s]" % key] = nr.value, nr.upper_bound
                mo = lp_c_mo(mart, p, seed=sub_seed(config.seed, i), max_it=config.max_it)
                rec["lp_c_mo[%s]" % key], rec["lp_c_mo_upper[%s]" % key] = mo.value, mo.upper_bound
        rep.records.append(rec)
    return {"norms": rep}


def _cmd_jn(config: RunConfig):
    vc = config.verify_config()
    samples = _samples(config)
    rep = verify._merge_all("jn", [verify.check_jn(m, vc, label) for (label, m) in samples])
    fit = verify.fit_constant(rep.records, vc.slope_band)
    rep.constants.update(c_hat=fit.c_hat, slope=fit.slope if fit.slope is not None else 0.0)
    if not fit.passed:
        rep.flag("growth slope %g above 1 + %g" % (fit.slope, vc.slope_band), hard=True)
    return {"jn": rep}


def _cmd_inclusion(config: RunConfig):
    vc = config.verify_config()
    reps = [verify.check_bmo_in_lp(m, vc, label) for (label, m) in _samples(config)]
    return {"inclusion": verify._merge_all("inclusion", reps)}


def _cmd_largedev(config: RunConfig):
    vc = config.verify_config()
    samples = _samples(config)
    hard = all(m.filtration.is_commutative() and verify._is_tracial(m.filtration) for (_, m) in samples)
    return {"largedev": verify.large_deviation_sweep(samples, vc, hard=hard)}


def _cmd_counterexample(config: RunConfig):
    return {"counterexample": verify.counterexample_report(config.n_list, config.p_list)}


def _cmd_interval(config: RunConfig):
    if config.step is not None:
        f = read_step_function(config.step)
    else:
        f = StepFunction(randn_complex((16, 2, 2), make_generator(config.seed)))
    rep = VerifyReport("interval")
    dyadic = interval_bmo_c(f, dyadic_only=True)
    bridge = bmo_c_centered(f.to_martingale()) ** 2
    rep.records.append(
        dict(
            interval_bmo_c=interval_bmo_c(f),
            interval_bmo=interval_bmo(f),
            interval_bmo_c_sqrt=interval_bmo_c_sqrt(f),
            interval_bmo_sqrt=interval_bmo_sqrt(f),
            dyadic_interval_bmo_c=dyadic,
            bmo_c_centered_sq=bridge,
            extended_bmo_p=extended_bmo_p(f),
        )
    )
    if abs(dyadic - bridge) > 1e-8 * max(1.0, bridge):
        rep.flag("bridge identity off by %g" % abs(dyadic - bridge), hard=True)
    pairs = verify.random_nested_pairs(f.depth, config.pairs, config.seed)
    for (i, p) in enumerate(p for p in config.p_list if 2.0 <= p < math.inf):
        nr = interval_bmo_p_lower(f, p, restarts=2, seed=sub_seed(config.seed, i), max_it=100)
        recs = interval_comparison_check(f, p, pairs, restarts=1, seed=sub_seed(config.seed, i), max_it=50)
        nfail = sum(not r.witness_pass for r in recs)
        rep.records.append(dict(p=p, interval_bmo_p=nr.value, witness=nr.witness, pairs=len(recs), witness_failures=nfail))
        if nfail > 0:
            rep.flag("p=%g: %d nested pairs violate the comparison" % (p, nfail), hard=True)
    return {"interval": rep}


def _cmd_sweep(config: RunConfig):
    return verify.run_suite(config.verify_config())


def _cmd_axioms(config: RunConfig):
    if config.spec is not None:
        filts = {"spec": parse_filtration_spec(config.spec).filtration}
    else:
        filts = verify.standard_filtrations()
    reps = []
    for (i, (name, filt)) in enumerate(sorted(filts.items())):
        rep = verify.check_filtration_axioms(filt, 200, sub_seed(config.seed, i))
        for r in rep.records:
            r["filtration"] = name
        reps.append(rep)
    return {"axioms": verify._merge_all("axioms", reps)}


COMMAND_FNS = dict(
    norms=_cmd_norms,
    jn=_cmd_jn,
    inclusion=_cmd_inclusion,
    largedev=_cmd_largedev,
    counterexample=_cmd_counterexample,
    interval=_cmd_interval,
    sweep=_cmd_sweep,
    axioms=_cmd_axioms,
)

##$#############################################################################
##^# report emission ###########################################################
def render_json(config: RunConfig, reports: dict) -> str:
    payload = dict(
        schema=SCHEMA,
        version=__version__,
        command=config.command,
        config=config.to_dict(),
        passed=all(r.passed for r in reports.values()),
        reports={name: r.to_dict() for (name, r) in reports.items()},
    )
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n"


def render_csv(reports: dict) -> str:
    """Long format with columns ``report, section, index, key, value``; only scalar fields."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for name in sorted(reports.keys()):
        rep = reports[name]
        w.writerow([name, "summary", 0, "passed", rep.passed])
        for (k, v) in sorted(rep.constants.items()):
            w.writerow([name, "constants", 0, k, v])
        for section in ("records", "table"):
            for (i, row) in enumerate(getattr(rep, section)):
                for k in sorted(row.keys()):
                    v = to_jsonable(row[k])
                    if isinstance(v, (str, bool, int, float)) or v is None:
                        w.writerow([name, section, i, k, v])
    return buf.getvalue()


def _print_summary(reports: dict):
    tp = TablePrinter(["report", "passed", "records", "flags"], ["%-16s", "%6s", "%7d", "%5d"])
    out = [tp.make_header()]
    for name in sorted(reports.keys()):
        r = reports[name]
        out.append(tp.make_values([name, "yes" if r.passed else "NO", len(r.records) + len(r.table), len(r.flags)]))
    out.append(tp.make_footer())
    tqdm.write("\n".join(out), file=sys.stderr)


def run(config: RunConfig) -> int:
    """Execute one command and write its report; returns the exit code."""
    reports = COMMAND_FNS[config.command](config)
    text = render_json(config, reports) if config.format == "json" else render_csv(reports)
    if config.out is None:
        sys.stdout.write(text)
    else:
        try:
            with open(config.out, "w") as fp:
                fp.write(text)
        except OSError as e:
            raise IoError(str(e), path=config.out)
    _print_summary(reports)
    return 0 if all(r.passed for r in reports.values()) else 1


##$#############################################################################
##^# argument parsing ##########################################################
def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if len(v.strip()) > 0]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    if len(vals) == 0 or any(math.isnan(v) or v < 1.0 for v in vals):
        raise argparse.ArgumentTypeError("exponents must be >= 1")
    return tuple(vals)


def _pos_float_list(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    if any(not (v > 0) for v in vals):
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def _int_list(text):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers")
    if any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def make_parser():
    parser = argparse.ArgumentParser(
        prog="ncbmo", description="Noncommutative martingale BMO norms and John-Nirenberg checks."
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--spec", type=str, default=None, help="filtration spec file")
        p.add_argument("--step", type=str, default=None, help="step function file (interval)")
        p.add_argument("--p", type=_float_list, default=RunConfig.p_list, dest="p_list", help="exponents, e.g. 3,4,6")
        p.add_argument("--eta", type=float, default=None, help="embedding split in [0, 1]")
        p.add_argument("--t", type=_pos_float_list, default=RunConfig.t_list, dest="t_list", help="large-deviation levels")
        p.add_argument("--n", type=_int_list, default=RunConfig.n_list, dest="n_list", help="counterexample sizes")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--ensemble", type=int, default=1, help="number of random martingales")
        p.add_argument("--pairs", type=int, default=100, help="nested interval pairs")
        p.add_argument("--restarts", type=int, default=8)
        p.add_argument("--max-it", type=int, default=300, dest="max_it")
        p.add_argument("--c", type=float, default=16.0, dest="c_jn", help="asserted John-Nirenberg constant")
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--positive-witness", action="store_true", dest="positive_witness")
        p.add_argument("--progress", action="store_true")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.eta is not None and not (0.0 <= args.eta <= 1.0):
        parser.error("--eta must lie in [0, 1]")
    kw = {k: v for (k, v) in vars(args).items() if k != "verbose"}
    try:
        config = RunConfig(**kw)
        return run(config)
    except ValueError as e:
        sys.stderr.write("error: %s\n" % e)
        return 2
    except NcbmoError as e:
        sys.stderr.write("error: %s: %s\n" % (e.code, e))
        return 2


if __name__ == "__main__":
    sys.exit(main())

##$#############################################################################
