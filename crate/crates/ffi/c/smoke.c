#include <stdio.h>
#include "multiwell.h"
int main(void) {
    MwPotential *p = NULL;
    if (mw_potential_builtin("triple-well-2d", &p) != MW_STATUS_OK) { puts(mw_last_error()); return 1; }
    double y[2] = {0.0, 0.0}, v, g[2];
    mw_potential_eval(p, y, 2, &v, g);
    printf("version %s k=%zu q=%zu V(0)=%g\n", mw_version(), mw_potential_dim(p), mw_potential_num_wells(p), v);
    mw_potential_free(p);
    return 0;
}
