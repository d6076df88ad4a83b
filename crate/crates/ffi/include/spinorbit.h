#ifndef SPINORBIT_H
#define SPINORBIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SoStatus {
  SO_STATUS_OK = 0,
  SO_STATUS_NULL_POINTER = 1,
  SO_STATUS_INVALID_ARGUMENT = 2,
  SO_STATUS_CONFIG = 3,
  SO_STATUS_PHYSICS = 4,
  SO_STATUS_IO = 5,
  SO_STATUS_PANIC = 6,
} SoStatus;

typedef enum SoGeometry {
  SO_GEOMETRY_BRAGG = 0,
  SO_GEOMETRY_LAUE = 1,
} SoGeometry;

typedef enum SoBeam {
  SO_BEAM_REFLECTED = 0,
  SO_BEAM_TRANSMITTED = 1,
} SoBeam;

/**
 * Spin component relative to the incident polarization.
 */
typedef enum SoComponent {
  SO_COMPONENT_NON_FLIPPED = 0,
  SO_COMPONENT_FLIPPED = 1,
} SoComponent;

typedef enum SoCoherence {
  SO_COHERENCE_COHERENT = 0,
  SO_COHERENCE_PENDELLOSUNG_AVERAGED = 1,
} SoCoherence;

/**
 * Opaque crystal model.
 */
typedef struct SoCrystal SoCrystal;

/**
 * Opaque grid of exit spinor fields.
 */
typedef struct SoGrid SoGrid;

/**
 * A (rocking, tilt) scan around the dynamical centre of a reflection.
 */
typedef struct SoScan {
  /**
   * An `SoGeometry` value.
   */
  uint32_t geometry;
  int32_t hkl[3];
  /**
   * Slab thickness along the surface normal (um).
   */
  double thickness_um;
  /**
   * Wavelength (A).
   */
  double wavelength;
  /**
   * Half ranges of the rocking and tilt axes (rad).
   */
  double theta_half_width;
  double rho_half_width;
  size_t n_theta;
  size_t n_rho;
  /**
   * Incident polarization direction, lab frame (x along the beam).
   */
  double polarization[3];
} SoScan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *so_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated and
 * always NUL-terminated when `len > 0`). Returns the full message length
 * without the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t so_last_error(char *buf, size_t len);

/**
 * The bundled alpha-quartz model.
 *
 * # Safety
 * `out` must be a valid pointer; the handle is released with `so_crystal_free`.
 */
enum SoStatus so_crystal_quartz(struct SoCrystal **out);

/**
 * Loads a material file (or `builtin:quartz`) searched on the data path,
 * with an optional form-factor table (null for the bundled one).
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be valid.
 */
enum SoStatus so_crystal_load(const char *material,
                              const char *form_factors,
                              struct SoCrystal **out);

/**
 * # Safety
 * `crystal` must be null or a handle from this library not yet freed.
 */
void so_crystal_free(struct SoCrystal *crystal);

/**
 * Darwin plateau width (rad) of reflection `hkl[3]` at `wavelength` (A).
 *
 * # Safety
 * Pointers must be valid; `hkl` points to three integers.
 */
enum SoStatus so_darwin_width(const struct SoCrystal *crystal,
                              const int32_t *hkl,
                              double wavelength,
                              double *out);

/**
 * Angular acceptance radius (rad) at exact backscattering.
 *
 * # Safety
 * Pointers must be valid; `hkl` points to three integers.
 */
enum SoStatus so_acceptance_radius(const struct SoCrystal *crystal,
                                   const int32_t *hkl,
                                   double wavelength,
                                   double *out);

/**
 * Builds the exit-field grid of a scan.
 *
 * # Safety
 * Pointers must be valid; the handle is released with `so_grid_free`.
 */
enum SoStatus so_grid_scan(const struct SoCrystal *crystal,
                           const struct SoScan *scan,
                           struct SoGrid **out);

/**
 * # Safety
 * `grid` must be null or a handle from this library not yet freed.
 */
void so_grid_free(struct SoGrid *grid);

/**
 * # Safety
 * Pointers must be valid.
 */
enum SoStatus so_grid_shape(const struct SoGrid *grid, size_t *n_theta, size_t *n_rho);

/**
 * Grid-integrated non-flipped and flipped flux of one beam.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SoStatus so_grid_spin_flux(const struct SoGrid *grid,
                                uint32_t beam_,
                                uint32_t coherence_,
                                double *non_flipped,
                                double *flipped);

/**
 * Winding number of a spin component's phase along the square loop of
 * half width `half_width` cells around the grid centre.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SoStatus so_grid_winding(const struct SoGrid *grid,
                              uint32_t beam_,
                              uint32_t component_,
                              size_t half_width,
                              int64_t *out);

/**
 * OAM distribution `p[l]`, `l = -truncation..=truncation`, of one spin
 * component on an `n_r` x `n_phi` polar grid centred on the scan centre.
 *
 * # Safety
 * `p` must point to `p_len` doubles; other pointers must be valid.
 */
enum SoStatus so_grid_oam(const struct SoGrid *grid,
                          uint32_t beam_,
                          uint32_t component_,
                          uint32_t coherence_,
                          int64_t truncation,
                          size_t n_r,
                          size_t n_phi,
                          double *p,
                          size_t p_len,
                          double *mean);

/**
 * Distribution of the spin interference term `conj(psi_+) psi_-`.
 *
 * # Safety
 * `p` must point to `p_len` doubles; other pointers must be valid.
 */
enum SoStatus so_grid_interference(const struct SoGrid *grid,
                                   uint32_t beam_,
                                   uint32_t coherence_,
                                   int64_t truncation,
                                   size_t n_r,
                                   size_t n_phi,
                                   double *p,
                                   size_t p_len,
                                   double *mean);

/**
 * Extra precession (rad) of a coil tilted by `tilt` (rad) for a neutron
 * diverging by `alpha` (rad), with guide field `guide_field` (T).
 *
 * # Safety
 * `out` must be valid.
 */
enum SoStatus so_coil_phase(double tilt,
                            double alpha,
                            double guide_field,
                            double wavelength,
                            double path_length,
                            double *out);

/**
 * Runs a configuration file; `out_dir` (nullable) overrides its output
 * directory.
 *
 * # Safety
 * Strings must be null (where allowed) or NUL-terminated.
 */
enum SoStatus so_run_config(const char *path, const char *out_dir, uint64_t seed);

/**
 * Runs a shipped preset.
 *
 * # Safety
 * Strings must be null (where allowed) or NUL-terminated.
 */
enum SoStatus so_run_preset(const char *name, const char *out_dir, uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINORBIT_H */
