#include <stdio.h>
#include "tsforecast.h"

int main(void) {
    TsfSeries *series = NULL;
    TsfModel *model = NULL;
    double history[300];
    double ahead[4];

    if (tsf_series_generate(300, 52.0, 40.0, 50.0, 0.01, 5.0, 7, &series) != TSF_STATUS_OK) {
        fprintf(stderr, "generate: %s\n", tsf_last_error());
        return 1;
    }
    if (tsf_model_train("arima", "{p: 2, d: 1, q: 1}", series, &model) != TSF_STATUS_OK) {
        fprintf(stderr, "train: %s\n", tsf_last_error());
        return 1;
    }
    tsf_series_values(series, history, 300);
    if (tsf_model_forecast(model, history, 300, 4, ahead) != TSF_STATUS_OK) {
        fprintf(stderr, "forecast: %s\n", tsf_last_error());
        return 1;
    }
    if (tsf_model_train("nope", NULL, series, &model) != TSF_STATUS_INVALID_ARGUMENT) {
        return 1;
    }
    printf("tsforecast %s: %.6f %.6f %.6f %.6f\n", tsf_version(), ahead[0], ahead[1], ahead[2], ahead[3]);
    tsf_model_free(model);
    tsf_series_free(series);
    return 0;
}
