#include <stdio.h>
#include <assert.h>
#include "marginal.h"

int main(void) {
    printf("library %s\n", mrg_version());
    MrgKernel *k = NULL;
    assert(mrg_kernel_build(2, 256, 1e-3, &k) == MRG_STATUS_OK);
    MrgOverlap *o = NULL;
    assert(mrg_overlap_build(k, &o) == MRG_STATUS_OK);
    double rn = 0, beta = 0, m2 = 0, s2 = 0;
    assert(mrg_overlap_total(o, 256, &rn) == MRG_STATUS_OK);
    assert(mrg_beta_schedule(o, 256, 0.5, &beta) == MRG_STATUS_OK);
    assert(mrg_second_moment_exact(o, beta, 1.0, 256, &m2) == MRG_STATUS_OK);
    assert(mrg_sigma_sq(0.5, &s2) == MRG_STATUS_OK);
    printf("R_256 = %.6f, beta_256 = %.6f, E[Z^2] = %.6f, sigma^2 = %.6f\n", rn, beta, m2, s2);

    double z = 0;
    assert(mrg_pinning_partition(k, 256, beta, 42, 0, 0, 0, &z) == MRG_STATUS_OK);
    printf("Z(0) at seed 42: %.6f\n", z);

    /* error path: out-of-range query populates the message buffer */
    double dummy;
    assert(mrg_overlap_total(o, 99999, &dummy) == MRG_STATUS_OUT_OF_RANGE);
    char msg[128];
    mrg_last_error(msg, sizeof msg);
    printf("error message: %s\n", msg);

    mrg_overlap_free(o);
    mrg_kernel_free(k);
    return 0;
}
