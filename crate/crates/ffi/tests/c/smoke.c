#include <math.h>
#include <stdio.h>
#include "aqcast.h"

static double sphere(const double *x, size_t dim, void *user) {
    double s = 0;
    for (size_t i = 0; i < dim; i++) s += x[i] * x[i];
    ++*(int *)user;
    return s;
}

int main(void) {
    double y[480], t[480], s[480], r[480];
    for (int i = 0; i < 480; i++) y[i] = 0.05 * i + 3 * sin(2 * M_PI * i / 24.0);
    if (aq_decompose(y, 480, 24, t, s, r) != AQ_STATUS_OK) return 1;
    for (int i = 0; i < 480; i++)
        if (fabs(y[i] - t[i] - s[i] - r[i]) > 1e-9) return 2;

    AqArima *m = NULL;
    if (aq_arima_fit(y, 480, 1, 1, 0, &m) != AQ_STATUS_OK) return 3;
    double f[3];
    aq_arima_forecast(m, 3, f);
    aq_arima_free(m);

    double lo[2] = {-5, -5}, hi[2] = {5, 5}, best[2], best_f;
    int calls = 0;
    if (aq_optimize(lo, hi, 2, NULL, sphere, &calls, best, &best_f) != AQ_STATUS_OK) return 4;
    if (calls == 0 || best_f > 1e-2) return 5;

    if (aq_arima_fit(y, 1, 1, 1, 0, &m) != AQ_STATUS_DATA || aq_last_error() == NULL) return 6;
    printf("ok %s: forecast %.3f, best %.2e after %d calls\n", aq_version(), f[0], best_f, calls);
    return 0;
}
