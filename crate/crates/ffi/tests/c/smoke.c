#include <stdio.h>
#include <string.h>
#include "motivic_vitushkin.h"

int main(void) {
    MvSet *s = NULL;
    if (mv_set_parse("graph(y = x^2, x in B(0,0))", "Q", &s) != MV_STATUS_OK) return 10;
    char *json = NULL;
    if (mv_riso_json(s, &json) != MV_STATUS_OK) return 11;
    if (!strstr(json, "\"v0\":\"1\"")) { fprintf(stderr, "%s\n", json); return 12; }
    mv_string_free(json);
    mv_set_free(s);
    MvSet *bad = NULL;
    if (mv_set_parse("graph(y = ", "Q", &bad) != MV_STATUS_SYNTAX || bad != NULL) return 13;
    if (mv_last_error() == NULL) return 14;
    bool nn = false;
    if (mv_is_nonneg("(L - 2)^2", &nn) != MV_STATUS_OK || !nn) return 15;
    printf("ok %s\n", mv_version());
    return 0;
}
