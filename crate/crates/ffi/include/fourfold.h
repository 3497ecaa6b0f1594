#ifndef FOURFOLD_H
#define FOURFOLD_H

#include <stdbool.h>
#include <stdint.h>
#include <stddef.h>

typedef enum FourfoldStatus {
  FOURFOLD_STATUS_OK = 0,
  FOURFOLD_STATUS_NULL_POINTER = 1,
  FOURFOLD_STATUS_INVALID_ARGUMENT = 2,
  FOURFOLD_STATUS_INVALID_STATE = 3,
  FOURFOLD_STATUS_INSUFFICIENT_DATA = 4,
  FOURFOLD_STATUS_INTERNAL = 5,
} FourfoldStatus;

typedef enum FourfoldMode {
  FOURFOLD_MODE_FOUR_PARTY = 0,
  FOURFOLD_MODE_SECRET_SHARING = 1,
  FOURFOLD_MODE_THREE_PARTY = 2,
} FourfoldMode;

// Opaque simulated Bell run (16 frames).
typedef struct FourfoldBellRun FourfoldBellRun;

// Opaque four-qubit state.
typedef struct FourfoldState FourfoldState;

// Opaque protocol transcript.
typedef struct FourfoldTranscript FourfoldTranscript;

typedef struct FourfoldQkdConfig {
  uint64_t n_rounds;
  enum FourfoldMode mode;
  double key_fraction;
  double visibility;
  uint64_t seed;
  // Arm attacked by an intercept-resend eavesdropper (0..=3), or −1 for none.
  int32_t eve_arm;
  // Eve measures in H/V when true, else at equatorial phase `eve_phase`.
  bool eve_hv;
  double eve_phase;
  // Three-party mode: common basis H/V when false, π/4 when true.
  bool three_party_diagonal;
} FourfoldQkdConfig;

typedef struct FourfoldSecurityReport {
  double s_estimate;
  double s_error;
  bool violation;
  uint64_t rounds_used;
} FourfoldSecurityReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t fourfold_last_error(char *buf, size_t len);

// The four-photon state: 1/√3 on HHVV and VVHH, −1/(2√3) on the mixed terms.
struct FourfoldState *fourfold_state_canonical(void);

struct FourfoldState *fourfold_state_ghz(void);

// State obtained from the bosonic two-pair source through symmetric
// splitters and one-photon-per-arm post-selection.
//
// # Safety
// `out` must be valid for writes; `success_probability` may be null.
enum FourfoldStatus fourfold_state_oracle(struct FourfoldState **out, double *success_probability);

// Builds a state from 16 amplitudes indexed `8a + 4a′ + 2b + b′` (H = 0,
// V = 1). The vector must be normalized.
//
// # Safety
// `re` and `im` must point to 16 doubles; `out` must be valid for writes.
enum FourfoldStatus fourfold_state_from_amplitudes(const double *re,
                                                   const double *im,
                                                   struct FourfoldState **out);

// # Safety
// `state` must come from this library and not be used afterwards.
void fourfold_state_free(struct FourfoldState *state);

// # Safety
// `re` and `im` must each have room for 16 doubles.
enum FourfoldStatus fourfold_state_amplitudes(const struct FourfoldState *state,
                                              double *re,
                                              double *im);

// `|⟨x|y⟩|`.
//
// # Safety
// Handles must be valid; `out` must be valid for writes.
enum FourfoldStatus fourfold_state_overlap_magnitude(const struct FourfoldState *x,
                                                     const struct FourfoldState *y,
                                                     double *out);

// Correlation at equatorial phases `[φa, φa′, φb, φb′]`, scaled by `visibility`.
//
// # Safety
// `phases` must point to 4 doubles; `out` must be valid for writes.
enum FourfoldStatus fourfold_correlation(const struct FourfoldState *state,
                                         const double *phases,
                                         double visibility,
                                         double *out);

// Exact Bell functional. `phases` holds eight phases
// `[a1, a2, a'1, a'2, b1, b2, b'1, b'2]` or is null for the optimal settings.
//
// # Safety
// `phases` must be null or point to 8 doubles; `out` must be valid for writes.
enum FourfoldStatus fourfold_bell_exact(const struct FourfoldState *state,
                                        double visibility,
                                        const double *phases,
                                        double *out);

// Simulates one Bell run. `efficiencies` holds eight detector efficiencies
// `[a+, a−, a'+, a'−, b+, b−, b'+, b'−]` or is null for ideal detectors;
// `phases` as in [`fourfold_bell_exact`].
//
// # Safety
// Pointers must be null or valid as described; `out` must be valid for writes.
enum FourfoldStatus fourfold_bell_run(const struct FourfoldState *state,
                                      double visibility,
                                      const double *efficiencies,
                                      const double *phases,
                                      uint64_t events_per_frame,
                                      uint64_t seed,
                                      bool corrected,
                                      struct FourfoldBellRun **out);

// # Safety
// `s` and `s_error` must be valid for writes.
enum FourfoldStatus fourfold_bell_run_value(const struct FourfoldBellRun *run,
                                            double *s,
                                            double *s_error);

// Counts of frame `frame` (0..16, table order), 16 outcomes indexed
// `8la + 4la′ + 2lb + lb′` with bit 0 for the +1 result.
//
// # Safety
// `counts` must have room for 16 values.
enum FourfoldStatus fourfold_bell_run_counts(const struct FourfoldBellRun *run,
                                             uint32_t frame,
                                             uint64_t *counts);

// # Safety
// `run` must come from this library and not be used afterwards.
void fourfold_bell_run_free(struct FourfoldBellRun *run);

// # Safety
// `config` must be valid; `out` must be valid for writes.
enum FourfoldStatus fourfold_qkd_run(const struct FourfoldState *state,
                                     const struct FourfoldQkdConfig *config,
                                     struct FourfoldTranscript **out);

// Number of recorded rounds, 0 for a null handle.
//
// # Safety
// `t` must be null or a valid handle.
uint64_t fourfold_transcript_len(const struct FourfoldTranscript *t);

// # Safety
// `report` must be valid for writes.
enum FourfoldStatus fourfold_security_check(const struct FourfoldTranscript *t,
                                            double k_sigma,
                                            struct FourfoldSecurityReport *report);

// Pair key when arms `reveal_1` and `reveal_2` disclose their key-round
// results. Writes the key length and the error rate between the two holders.
//
// # Safety
// `bits` and `qber` must be valid for writes.
enum FourfoldStatus fourfold_pair_key(const struct FourfoldTranscript *t,
                                      uint32_t reveal_1,
                                      uint32_t reveal_2,
                                      uint64_t *bits,
                                      double *qber);

// # Safety
// `t` must come from this library and not be used afterwards.
void fourfold_transcript_free(struct FourfoldTranscript *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOURFOLD_H */
