from ncbmo_torch.martingale import (
    rademacher_matrix_martingale,
    quantum_tensor_filtration,
    random_martingale,
)
from ncbmo_torch.norms import bmo, bmo_c, bmo_p
from ncbmo_torch.verify import VerifyConfig, check_jn, fit_constant
from ncbmo_torch.utils import TablePrinter


if __name__ == "__main__":
    ######################## COUNTEREXAMPLE ###########################
    tp = TablePrinter(["n", "p", "lp", "bmo_c"], ["%3d", "%4.1f", "%9.4e", "%9.4e"])
    print(tp.make_header())
    for n in [2, 4, 8]:
        filt, mart = rademacher_matrix_martingale(n)
        for p in [3.0, 4.0, 6.0]:
            print(tp.make_values([n, p, float(filt.lp_norm(mart.x, p)), bmo_c(mart)]))
    print(tp.make_footer())

    ######################## JOHN-NIRENBERG ###########################
    filt = quantum_tensor_filtration((0.3, 0.7), [[0.6, 0.1 + 0.05j], [0.1 - 0.05j, 0.4]])
    config = VerifyConfig(p_list=(3.0, 4.0, 8.0), restarts=4, max_it=100)
    records = []
    for seed in range(10):
        mart = random_martingale(filt, seed)
        records.extend(check_jn(mart, config, "q/%d" % seed).records)
    fit = fit_constant(records)
    print("c_hat = %9.4e, slope = %9.4e" % (fit.c_hat, fit.slope))

    mart = random_martingale(filt, 0)
    rep = bmo_p(mart, 4.0, restarts=4)
    print("bmo = %9.4e, bmo_4 >= %9.4e (witness at n=%d, m=%d)" % (bmo(mart), rep.value, rep.witness["n"], rep.witness["m"]))
