#include <stdio.h>
#include <string.h>
#include "raycal.h"

int main(int argc, char **argv) {
    if (argc != 3) return 10;
    RaycalCameras *cams = NULL;
    if (raycal_cameras_read(argv[1], &cams) != RAYCAL_STATUS_OK) return 11;
    size_t n = raycal_cameras_count(cams);
    double x[3] = {0.1, -0.2, 0.05}, px[2], o[3], d[3];
    if (raycal_camera_project(cams, 0, x, px) != RAYCAL_STATUS_OK) return 12;
    if (raycal_camera_unproject(cams, 0, px, o, d) != RAYCAL_STATUS_OK) return 13;
    RaycalCameraError mean;
    if (raycal_camera_error(cams, cams, &mean, NULL, 0) != RAYCAL_STATUS_OK) return 14;
    RaycalCameras *bad = NULL;
    if (raycal_cameras_read(argv[2], &bad) != RAYCAL_STATUS_IO) return 15;
    char msg[512];
    if (raycal_last_error_message(msg, sizeof msg) <= 0) return 16;
    printf("cameras %zu pixel %.6f %.6f focal %.1f msg %s\n", n, px[0], px[1], mean.focal_pct, msg);
    raycal_cameras_free(cams);
    raycal_cameras_free(NULL);
    return 0;
}
