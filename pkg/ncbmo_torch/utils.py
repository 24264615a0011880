##^# ops import and utils ######################################################
import math
from fractions import Fraction

import torch, numpy as np
from torch.utils.tensorboard import SummaryWriter

CDTYPE = torch.complex128
RDTYPE = torch.float64

##$#############################################################################
##^# torch utils ###############################################################
def ctensor(x):
    """Cast anything array-like to a complex128 tensor."""
    return torch.as_tensor(x).to(CDTYPE)


ct = lambda x: x.transpose(-1, -2).conj()
diag = lambda x: x.diagonal(0, -1, -2)
herm = lambda x: (x + ct(x)) / 2
trace = lambda x: diag(x).sum(-1)
fro = lambda x: torch.linalg.norm(x.reshape(x.shape[:-2] + (-1,)), dim=-1)
eye = lambda n: torch.eye(n, dtype=CDTYPE)

# row-major vectorization, vec(e_ij) = e_{i * N + j}
vec = lambda x: x.reshape(x.shape[:-2] + (-1,))
unvec = lambda v, n: v.reshape(v.shape[:-1] + (n, n))

t2n = (
    lambda x: np.copy(x.detach().cpu().clone().numpy())
    if isinstance(x, torch.Tensor)
    else x
)


def make_generator(seed):
    return torch.Generator().manual_seed(int(seed) % (2 ** 63))


def sub_seed(seed, *idx):
    """Deterministic child seed for sample/restart ``idx`` of a run seeded with ``seed``."""
    s = np.random.SeedSequence([int(seed)] + [int(i) for i in idx])
    return int(s.generate_state(1, dtype=np.uint64)[0] % (2 ** 63))


def randn_complex(shape, generator):
    re = torch.randn(shape, generator=generator, dtype=RDTYPE)
    im = torch.randn(shape, generator=generator, dtype=RDTYPE)
    return torch.complex(re, im) / math.sqrt(2.0)


def random_hermitian(n, generator):
    return herm(randn_complex((n, n), generator))


def random_psd(n, generator, rank=None):
    G = randn_complex((n, n if rank is None else rank), generator)
    return G @ ct(G)


def is_diagonal(A, tol=1e-10):
    off = A - torch.diag_embed(diag(A))
    return bool(torch.all(fro(off) <= tol * torch.clamp(fro(A), min=1.0)))


##$#############################################################################
##^# serialization #############################################################
def to_jsonable(obj):
    """Recursively convert tensors, complex numbers and fractions to plain JSON types."""
    if isinstance(obj, torch.Tensor):
        obj = t2n(obj)
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return to_jsonable(np.stack([obj.real, obj.imag], -1))
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for (k, v) in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if obj is None or isinstance(obj, (str, bool, int, float)):
        return obj
    return str(obj)


##$#############################################################################
##^# table printing utility class ##############################################
class TablePrinter:
    """Fixed-width iteration table, optionally mirrored to tensorboard."""

    def __init__(self, names, fmts=None, prefix="", use_writer=False):
        self.names = names
        self.fmts = fmts if fmts is not None else ["%9.4e" for _ in names]
        self.widths = [
            max(self.calc_width(fmt), len(name)) + 2
            for (fmt, name) in zip(self.fmts, names)
        ]
        self.prefix = prefix
        self.writer, self.iteration = None, 0
        if use_writer:
            self.writer = SummaryWriter(flush_secs=1)

    def calc_width(self, fmt):
        f = fmt[-1]
        if f in "fedi":
            return max(len(fmt % 1), len(fmt % (-1)))
        elif f == "s":
            return len(fmt % "")
        raise ValueError("Unrecognized print format [%s]" % fmt)

    def pad_field(self, s, width):
        rem = max(width - len(s), 0)
        return (" " * ((rem // 2) + (rem % 2))) + s + (" " * (rem // 2))

    def make_row_sep(self):
        return "+" + "".join([("-" * width) + "+" for width in self.widths])

    def make_header(self):
        s = self.prefix + self.make_row_sep() + "\n" + self.prefix
        for (name, width) in zip(self.names, self.widths):
            s += "|" + self.pad_field(name, width)
        return s + "|\n" + self.prefix + self.make_row_sep()

    def make_footer(self):
        return self.prefix + self.make_row_sep()

    def make_values(self, vals):
        assert len(vals) == len(self.fmts)
        s = self.prefix
        for (val, fmt, width) in zip(vals, self.fmts, self.widths):
            s += "|" + self.pad_field(fmt % val, width)
        if self.writer is not None:
            for (name, val) in zip(self.names, vals):
                self.writer.add_scalar(name, val, self.iteration)
            self.iteration += 1
        return s + "|"

    def close(self):
        if self.writer is not None:
            self.writer.close()


##$#############################################################################
