#ifndef EVSNN_H
#define EVSNN_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum EvsnnStatus {
  EVSNN_STATUS_OK = 0,
  EVSNN_STATUS_NULL_POINTER = 1,
  EVSNN_STATUS_INVALID_ARGUMENT = 2,
  EVSNN_STATUS_IO = 3,
  EVSNN_STATUS_FORMAT = 4,
  EVSNN_STATUS_WEIGHT_OVERFLOW = 5,
  EVSNN_STATUS_INFEASIBLE = 6,
  EVSNN_STATUS_SHAPE_MISMATCH = 7,
  EVSNN_STATUS_PANIC = 8,
} EvsnnStatus;

// Chip emulator with its own copy of a quantized network and persistent
// compartment state.
typedef struct EvsnnEmulator EvsnnEmulator;

// A float network.
typedef struct EvsnnNetwork EvsnnNetwork;

// A quantized network.
typedef struct EvsnnQnet EvsnnQnet;

// Compartment parameters shared by every layer.
typedef struct EvsnnCubaParams {
  int64_t vth_mant;
  int64_t delta_v;
  int64_t delta_i;
  int64_t bias;
} EvsnnCubaParams;

typedef struct EvsnnMapSummary {
  uint64_t total_compartments;
  uint64_t total_synapses;
  uint64_t cores_used;
  uint64_t chips;
  bool feasible;
} EvsnnMapSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *evsnn_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *evsnn_last_error(void);

// Builds `variant` ("full128", "win100" or "win50") with default LIF
// parameters and seeded initial weights.
//
// # Safety
// `variant` must be a NUL-terminated string and `out` a valid pointer.
enum EvsnnStatus evsnn_network_build(const char *variant, uint64_t seed, struct EvsnnNetwork **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum EvsnnStatus evsnn_network_load(const char *path, struct EvsnnNetwork **out);

// # Safety
// `net` must come from this library; `path` must be a NUL-terminated string.
enum EvsnnStatus evsnn_network_save(const struct EvsnnNetwork *net, const char *path);

// # Safety
// `net` must be null or come from this library, and not be used afterwards.
void evsnn_network_free(struct EvsnnNetwork *net);

// Number of input values (`2·height·width`), 0 for a null handle.
//
// # Safety
// `net` must be null or come from this library.
size_t evsnn_network_input_len(const struct EvsnnNetwork *net);

// Holds a binary frame (`[c][y][x]` bytes, nonzero = spike) for `timesteps`
// steps from rest and writes the predicted class.
//
// # Safety
// `bits` must point to `len` bytes and `class_out` be a valid pointer.
enum EvsnnStatus evsnn_network_classify(const struct EvsnnNetwork *net,
                                        const uint8_t *bits,
                                        size_t len,
                                        size_t timesteps,
                                        size_t *class_out);

// Quantizes with the default settings at float-to-integer `scale`
// (25 for the reference threshold 0.4).
//
// # Safety
// `net` must come from this library and `out` be a valid pointer.
enum EvsnnStatus evsnn_quantize(const struct EvsnnNetwork *net,
                                double scale,
                                struct EvsnnQnet **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum EvsnnStatus evsnn_qnet_load(const char *path, struct EvsnnQnet **out);

// # Safety
// `qnet` must come from this library; `path` must be a NUL-terminated string.
enum EvsnnStatus evsnn_qnet_save(const struct EvsnnQnet *qnet, const char *path);

// # Safety
// `qnet` must be null or come from this library, and not be used afterwards.
void evsnn_qnet_free(struct EvsnnQnet *qnet);

// # Safety
// `qnet` must come from this library and `out` be a valid pointer.
enum EvsnnStatus evsnn_qnet_params(const struct EvsnnQnet *qnet, struct EvsnnCubaParams *out);

// Maps the quantized network onto neurocores with the default limits and
// `bytes_per_synapse` bytes of synaptic memory per synapse.
//
// # Safety
// `qnet` must come from this library and `out` be a valid pointer.
enum EvsnnStatus evsnn_map(const struct EvsnnQnet *qnet,
                           size_t bytes_per_synapse,
                           struct EvsnnMapSummary *out);

// Creates an emulator from a copy of `qnet`, all compartments at rest.
//
// # Safety
// `qnet` must come from this library and `out` be a valid pointer.
enum EvsnnStatus evsnn_emulator_new(const struct EvsnnQnet *qnet, struct EvsnnEmulator **out);

// Advances one timestep. `input` holds one byte per input neuron (nonzero
// = spike); `spikes_out` receives one byte per output neuron.
//
// # Safety
// `input` must point to `input_len` bytes and `spikes_out` to `out_len`.
enum EvsnnStatus evsnn_emulator_step(struct EvsnnEmulator *emu,
                                     const uint8_t *input,
                                     size_t input_len,
                                     uint8_t *spikes_out,
                                     size_t out_len);

// Voltage of output neuron `index` after the last step, before any reset.
//
// # Safety
// `emu` must come from this library and `out` be a valid pointer.
enum EvsnnStatus evsnn_emulator_output_potential(const struct EvsnnEmulator *emu,
                                                 size_t index,
                                                 int64_t *out);

// # Safety
// `emu` must be null or come from this library, and not be used afterwards.
void evsnn_emulator_free(struct EvsnnEmulator *emu);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVSNN_H */
