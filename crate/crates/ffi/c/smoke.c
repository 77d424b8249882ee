/* Simulates the built-in scenario, scores it against itself and fits the
 * fundamental diagram through the C interface. */
#include <stdio.h>
#include <stdlib.h>

#include "tse.h"

#define CHECK(call)                                                      \
    do {                                                                 \
        TseStatus s_ = (call);                                           \
        if (s_ != TSE_STATUS_OK) {                                       \
            char msg[256];                                               \
            tse_last_error(msg, sizeof msg);                             \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_, msg); \
            return 1;                                                    \
        }                                                                \
    } while (0)

int main(void) {
    TseGrid *speed = NULL, *density = NULL;
    CHECK(tse_simulate_default(&speed, &density));

    size_t m = 0, t = 0;
    CHECK(tse_grid_shape(speed, &m, &t));
    double *v = malloc(m * t * sizeof *v);
    double *r = malloc(m * t * sizeof *r);
    CHECK(tse_grid_values(speed, v, m * t));
    CHECK(tse_grid_values(density, r, m * t));

    TseCalibration cal;
    CHECK(tse_calibrate(r, v, m * t, &cal));

    TseMetrics met;
    CHECK(tse_evaluate(speed, speed, 0.1, 0, &met));

    TseModel *model = NULL;
    if (tse_model_load("/nonexistent.ckpt", &model) != TSE_STATUS_IO) {
        return 2;
    }
    printf("version %s grid %zux%zu v_f %.6f rho_m %.6f held-out %zu rmse %.1f\n", tse_version(), m, t, cal.v_f,
           cal.rho_m, met.test_cells, met.test_rmse);

    free(v);
    free(r);
    tse_grid_free(speed);
    tse_grid_free(density);
    return 0;
}
