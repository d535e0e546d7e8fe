#include <math.h>
#include <stdio.h>
#include "stereo6d.h"

int main(void) {
    S6dRig *rig = NULL;
    if (s6d_rig_new_rectified(600, 600, 319.5, 239.5, 640, 480, 50, &rig) != S6D_STATUS_OK) return 1;
    S6dCorrespondences *set = s6d_correspondences_new();
    for (int i = 0; i < 60; i++) {
        double x = (i % 4) * 20.0 - 30.0, y = ((i / 4) % 4) * 20.0 - 30.0, z = (i / 16) * 15.0 - 20.0;
        double Z = z + 800.0;
        s6d_correspondences_push(set, S6D_VIEW_LEFT, 600 * x / Z + 319.5, 600 * y / Z + 239.5, x, y, z, 1.0);
        s6d_correspondences_push(set, S6D_VIEW_RIGHT, 600 * (x - 50) / Z + 319.5, 600 * y / Z + 239.5, x, y, z, 1.0);
    }
    S6dEstimate est;
    S6dSolverParams params = s6d_solver_params_default();
    if (s6d_estimate(S6D_STRATEGY_MID_JOINT_PNP, set, rig, NULL, &params, &est) != S6D_STATUS_OK) return 2;
    if (fabs(est.pose.translation[2] - 800.0) > 1e-6) return 3;
    if (s6d_estimate(S6D_STRATEGY_DISPARITY3D3D, set, rig, NULL, NULL, &est) != S6D_STATUS_CONFIGURATION) return 4;
    char msg[256];
    if (s6d_last_error(msg, sizeof msg) == 0) return 5;
    printf("%s %s\n", s6d_version(), msg);
    s6d_correspondences_free(set);
    s6d_rig_free(rig);
    return 0;
}
