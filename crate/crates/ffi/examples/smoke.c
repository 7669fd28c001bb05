/* Build: cargo build -p dualspace-ffi --release
 *        cc -Icrates/ffi/include crates/ffi/examples/smoke.c \
 *           target/release/libdualspace_ffi.a -lpthread -ldl -lm -o smoke */
#include <stdio.h>
#include <stdlib.h>

#include "dualspace.h"

#define CHECK(call)                                                            \
    do {                                                                       \
        DsStatus st_ = (call);                                                 \
        if (st_ != DS_STATUS_OK) {                                             \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)st_,           \
                    ds_last_error_message());                                  \
            return 1;                                                          \
        }                                                                      \
    } while (0)

int main(void) {
    DsDataset *ds = NULL;
    size_t rows, cols, held;
    CHECK(ds_dataset_ring(8, 2.0, 0.1, 512, 1, &ds));
    CHECK(ds_dataset_shape(ds, &rows, &cols, &held));

    double *x = malloc(rows * cols * sizeof(double));
    CHECK(ds_dataset_samples(ds, x, rows * cols));

    DsGanOptions opts = ds_gan_options_default();
    opts.epochs = 5;
    DsGan *gan = NULL;
    CHECK(ds_gan_train(x, rows, cols, &opts, &gan));

    size_t k = 256;
    double *s = malloc(k * cols * sizeof(double));
    CHECK(ds_gan_sample(gan, k, 7, s, k * cols));

    double mmd = 0.0;
    CHECK(ds_mmd_rbf(s, k, x, rows, cols, 0.0, &mmd));
    printf("dualspace %s: %zu x %zu ring, mmd %.4f\n", ds_version(), rows, cols, mmd);

    if (ds_dataset_ring(8, 2.0, 0.1, 10, 0, NULL) != DS_STATUS_NULL_POINTER) {
        return 1;
    }
    printf("expected error: %s\n", ds_last_error_message());

    free(s);
    free(x);
    ds_gan_free(gan);
    ds_dataset_free(ds);
    return 0;
}
