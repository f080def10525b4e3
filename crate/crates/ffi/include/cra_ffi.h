#ifndef CRA_FFI_H
#define CRA_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum CraStatus {
  CRA_STATUS_OK = 0,
  CRA_STATUS_NULL_POINTER = 1,
  CRA_STATUS_INVALID_ARGUMENT = 2,
  CRA_STATUS_BUFFER_TOO_SMALL = 3,
  CRA_STATUS_IO = 4,
  CRA_STATUS_INVALID_MODEL = 5,
  CRA_STATUS_FORMAT = 6,
  CRA_STATUS_NUMERIC = 7,
  CRA_STATUS_INTERNAL = 8,
  CRA_STATUS_PANIC = 9,
} CraStatus;

/**
 * Network inputs loaded from a dataset or evidence file.
 */
typedef struct CraEvidence CraEvidence;

/**
 * A body model.
 */
typedef struct CraModel CraModel;

/**
 * A trained network restored from a checkpoint.
 */
typedef struct CraNetwork CraNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *cra_last_error(void);

/**
 * Loads a body model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CraStatus cra_model_load(const char *path, struct CraModel **out);

/**
 * Generates a procedural body model.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CraStatus cra_model_generate(uint64_t seed, size_t num_vertices, struct CraModel **out);

/**
 * Writes a body model file.
 *
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
enum CraStatus cra_model_save(const struct CraModel *model, const char *path);

/**
 * Vertex, face and output-joint counts. Any output pointer may be null.
 *
 * # Safety
 * `model` must come from this library.
 */
enum CraStatus cra_model_sizes(const struct CraModel *model,
                               size_t *vertices,
                               size_t *faces,
                               size_t *joints);

/**
 * Poses the model. `theta` holds 72 axis-angle values, `beta` 10 shape
 * values. Vertices and joints are written as packed xyz triples; either
 * output may be null.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum CraStatus cra_model_forward(const struct CraModel *model,
                                 const double *theta,
                                 const double *beta,
                                 double *vertices,
                                 size_t vertices_cap,
                                 double *joints,
                                 size_t joints_cap);

/**
 * # Safety
 * `model` must come from this library or be null.
 */
void cra_model_free(struct CraModel *model);

/**
 * Loads a training checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum CraStatus cra_network_load(const char *path, struct CraNetwork **out);

/**
 * Vertex count, output-joint count and length of the parameter vector.
 *
 * # Safety
 * `net` must come from this library.
 */
enum CraStatus cra_network_sizes(const struct CraNetwork *net,
                                 size_t *vertices,
                                 size_t *joints,
                                 size_t *theta);

/**
 * # Safety
 * `net` must come from this library or be null.
 */
void cra_network_free(struct CraNetwork *net);

/**
 * Loads the network inputs of a dataset or evidence file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum CraStatus cra_evidence_load(const char *path, struct CraEvidence **out);

/**
 * Number of samples in an evidence handle.
 *
 * # Safety
 * `ev` must come from this library.
 */
enum CraStatus cra_evidence_len(const struct CraEvidence *ev, size_t *len);

/**
 * # Safety
 * `ev` must come from this library or be null.
 */
void cra_evidence_free(struct CraEvidence *ev);

/**
 * Predicts the mesh for sample `index`. Outputs are packed rows: vertices
 * and 3D joints as xyz, 2D joints as xy, plus the raw parameter vector. Any
 * output may be null.
 *
 * # Safety
 * Handles must come from this library; buffers must hold their `*_cap`
 * values.
 */
enum CraStatus cra_network_predict(const struct CraNetwork *net,
                                   const struct CraEvidence *ev,
                                   size_t index,
                                   double *vertices,
                                   size_t vertices_cap,
                                   double *joints3d,
                                   size_t joints3d_cap,
                                   double *j2d,
                                   size_t j2d_cap,
                                   double *theta,
                                   size_t theta_cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRA_FFI_H */
