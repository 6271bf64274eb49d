#include <stdio.h>
#include "dalmc.h"

static const char *CONFIG =
    "[target]\nkind = \"gaussian\"\nmean = [0.0]\nvariance = 1.0\n"
    "[base]\nkind = \"gaussian\"\nsigma = 1.0\n"
    "[schedule]\nfamily = \"cosine\"\nphi = 1.0\nhorizon = 1.0\n";

int main(void) {
    DalmcPath *path = NULL;
    if (dalmc_path_from_toml(CONFIG, &path) != DALMC_STATUS_OK) {
        char msg[256];
        dalmc_last_error(msg, sizeof msg);
        fprintf(stderr, "%s\n", msg);
        return 1;
    }
    double x = 0.5, score = 0.0, l = 0.0;
    if (dalmc_path_score(path, 0.5, &x, 1, &score) != DALMC_STATUS_OK) return 1;
    if (dalmc_lipschitz_bound(path, 0.5, &l) != DALMC_STATUS_OK) return 1;
    DalmcRun *run = NULL;
    if (dalmc_run(path, 0.1, 100, 8, 1, &run) != DALMC_STATUS_OK) return 1;
    size_t chains = 0, dim = 0, flagged = 0;
    dalmc_run_shape(run, &chains, &dim, &flagged);
    printf("score=%.6f lipschitz=%.6f chains=%zu dim=%zu flagged=%zu\n", score, l, chains, dim, flagged);
    dalmc_run_free(run);
    dalmc_path_free(path);
    return 0;
}
