/* Minimal host: play a tacton and drive one parameter until it finishes. */
#include <stdio.h>
#include <time.h>

#include "adaptics_engine.h"

static void sleep_ms(long ms) {
    struct timespec ts = {ms / 1000, (ms % 1000) * 1000000L};
    nanosleep(&ts, NULL);
}

static int report(AdapticsStatus status) {
    char message[256];
    adaptics_last_error_message(message, sizeof message);
    fprintf(stderr, "error %d %s: %s\n", (int)status, adaptics_last_error_code(), message);
    return 1;
}

int main(int argc, char **argv) {
    const char *path = argc > 1 ? argv[1] : "loading.adaptics";
    uint64_t engine = 0;
    AdapticsStatus status = init_adaptics_engine(true, 40000.0, 40, &engine);
    if (status != ADAPTICS_OK) return report(status);
    status = adaptics_engine_play_tacton_immediate(engine, path);
    if (status != ADAPTICS_OK) return report(status);

    for (int i = 0; i <= 50; i++) {
        adaptics_engine_update_user_parameter(engine, "progress", i / 50.0);
        sleep_ms(20);
    }
    AdapticsEngineStatus s;
    for (int polls = 0; polls < 200; polls++) {
        adaptics_engine_status(engine, &s);
        if (s.finished) break;
        sleep_ms(20);
    }
    printf("finished=%d batches=%llu device_time=%.3f\n", s.finished, (unsigned long long)s.batches, s.device_time);

    deinit_adaptics_engine(engine);
    status = adaptics_engine_stop(engine);
    printf("after deinit: %s\n", adaptics_last_error_code());
    return status == ADAPTICS_INVALID_HANDLE && s.finished ? 0 : 1;
}
