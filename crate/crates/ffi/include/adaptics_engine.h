#ifndef ADAPTICS_ENGINE_H
#define ADAPTICS_ENGINE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
    ADAPTICS_OK = 0,
    ADAPTICS_INVALID_RATE = 1,
    ADAPTICS_INVALID_BATCH = 2,
    ADAPTICS_DEVICE_UNAVAILABLE = 3,
    ADAPTICS_IO = 4,
    ADAPTICS_INVALID_TACTON = 5,
    ADAPTICS_BAD_MATRIX = 6,
    ADAPTICS_NON_FINITE = 7,
    ADAPTICS_QUEUE_FULL = 8,
    ADAPTICS_INVALID_HANDLE = 9,
    ADAPTICS_INVALID_ARGUMENT = 10,
    ADAPTICS_INTERNAL = 11
} AdapticsStatus;

typedef struct {
    bool loaded;
    bool playing;
    bool finished;
    uint64_t warnings;
    double pattern_time;
    double device_time;
    uint64_t batches;
} AdapticsEngineStatus;

/* Handles are nonzero. One control thread per handle. */
AdapticsStatus init_adaptics_engine(bool use_mock, double rate, uint32_t batch, uint64_t *out_handle);
AdapticsStatus adaptics_engine_play_tacton_immediate(uint64_t handle, const char *path);
AdapticsStatus adaptics_engine_update_user_parameter(uint64_t handle, const char *name, double value);
/* 16 doubles, row-major, bottom row 0 0 0 1. */
AdapticsStatus adaptics_engine_update_transform(uint64_t handle, const double *matrix);
AdapticsStatus adaptics_engine_stop(uint64_t handle);
AdapticsStatus adaptics_engine_status(uint64_t handle, AdapticsEngineStatus *out);
AdapticsStatus deinit_adaptics_engine(uint64_t handle);

/* Last failure on the calling thread; code is static, NULL if none. */
const char *adaptics_last_error_code(void);
size_t adaptics_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}
#endif

#endif
