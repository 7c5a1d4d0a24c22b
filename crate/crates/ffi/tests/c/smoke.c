#include <math.h>
#include <stdio.h>
#include "beamsplit.h"

int main(void) {
    BsEstimator *est = NULL;
    if (bs_estimator_new(8, 300e9, 0.0, 2, 32, &est) != BS_STATUS_OK) return 1;
    double a[16];
    if (bs_steering_far(est, 0.25, 300e9, a, 16) != BS_STATUS_OK) return 2;

    /* Identity pilots observe the channel directly. */
    double b[2 * 8 * 8] = {0};
    for (int i = 0; i < 8; i++) b[2 * (i * 8 + i)] = 1.0;
    double y[2 * 8 * 2];
    for (int i = 0; i < 8; i++) {
        for (int m = 0; m < 2; m++) {
            y[2 * (i * 2 + m)] = 2.0 * a[2 * i];
            y[2 * (i * 2 + m) + 1] = 2.0 * a[2 * i + 1];
        }
    }
    BsResult *res = NULL;
    if (bs_estimate(est, b, y, 8, &res) != BS_STATUS_OK) return 3;
    double dir = 0.0;
    if (bs_result_direction(res, &dir) != BS_STATUS_OK) return 4;
    if (fabs(dir - 0.25) > 1.0 / 32.0) return 5;

    if (bs_estimator_new(8, 300e9, 0.0, 2, 4, NULL) != BS_STATUS_NULL_POINTER) return 6;
    char msg[64];
    if (bs_last_error(msg, sizeof msg) == 0) return 7;

    bs_result_free(res);
    bs_estimator_free(est);
    printf("ok %s %.4f\n", bs_version(), dir);
    return 0;
}
