/* mimosce: multichannel speech compression and enhancement.
 *
 * C interface to the core library. Handles are opaque; every function that
 * can fail returns a status code and leaves a message in msce_last_error()
 * (thread-local). Strings returned through char** are heap-allocated and
 * must be released with msce_string_free().
 */
#ifndef MIMOSCE_H
#define MIMOSCE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define MSCE_OK 0
#define MSCE_ERR_INVALID 1  /* bad arguments or configuration */
#define MSCE_ERR_DATA 2     /* unreadable or malformed data */
#define MSCE_ERR_PROTOCOL 3 /* wire-format violation */
#define MSCE_ERR_NUMERIC 4  /* non-finite values, failed numeric contract */

typedef struct msce_model msce_model;
typedef struct msce_encoder msce_encoder;
typedef struct msce_decoder msce_decoder;

/* Library/ABI version, currently 1. */
uint32_t msce_abi_version(void);

/* Message from the most recent failing call on this thread. */
const char* msce_last_error(void);

void msce_string_free(char* s);

/* ---- models ---------------------------------------------------------- */

/* Builds a freshly initialized model from a ModelConfig JSON object. */
int msce_model_create(const char* config_json, uint64_t seed, msce_model** out);
int msce_model_load(const char* path, msce_model** out);
int msce_model_save(msce_model* model, const char* path);
void msce_model_free(msce_model* model);

/* Summary JSON: config, parameter count, compression ratio, receptive field,
 * checkpoint CRC. */
int msce_model_info(msce_model* model, char** out_json);

/* Offline enhancement: reads a WAV, runs the full network in inference mode,
 * writes the enhanced WAV (float32). */
int msce_enhance_wav(msce_model* model, const char* in_wav, const char* out_wav);

/* ---- data synthesis --------------------------------------------------- */

/* Mono WAV -> simulated N-channel capture. geometry_json may be NULL for the
 * built-in seven-microphone layout, a JSON object, or an @-prefixed path. */
int msce_simulate_array(const char* in_wav, const char* geometry_json, const char* out_wav);

/* Mixes one noisy WAV: clean (possibly multichannel) + noise at the target
 * SNR. */
int msce_mix_wav(const char* clean_wav, const char* noise_wav, double snr_db, uint64_t seed,
                 const char* out_wav);

/* Materializes every entry of a dataset manifest as WAV pairs in out_dir
 * (pair_NNNN.clean.wav / pair_NNNN.noisy.wav, float32), using the same
 * per-entry seed derivation as training. Returns a JSON listing. */
int msce_mix_manifest(const char* manifest_path, const char* out_dir, uint64_t seed,
                      char** out_json);

/* ---- training --------------------------------------------------------- */

/* run_config_json fields: {"version":1, "model":{...}, "train":{...},
 * "manifest":"path", "checkpoint":"path", "log":"path", "resume":false}.
 * Writes checkpoints plus the ".opt" optimizer sidecar and a newline-
 * delimited loss log; returns a summary JSON. */
int msce_train(const char* run_config_json, char** out_summary_json);

/* ---- verification ----------------------------------------------------- */

/* Finite-difference gradient checks; returns the report and MSCE_OK only if
 * every check passed (MSCE_ERR_NUMERIC otherwise). */
int msce_gradcheck(char** out_report_json);

/* ---- metrics ---------------------------------------------------------- */

int msce_si_sdr(const float* reference, const float* estimate, int64_t n, double* out_db);
int msce_seg_snr(const float* reference, const float* estimate, int64_t n, double* out_db);
int msce_stoi(const float* clean, const float* processed, int64_t n, int sample_rate,
              double* out_score);

/* Evaluates an eval manifest ({"entries":[{system, clean, processed, noise,
 * snr_db}...]}), writes <prefix>_results.csv, <prefix>_summary.{csv,txt} and
 * <prefix>_by_snr.{csv,txt}; pesq_csv_path may be NULL. */
int msce_eval(const char* eval_manifest_path, const char* out_prefix, const char* pesq_csv_path,
              char** out_summary_json);

/* ---- latent streaming ------------------------------------------------- */

/* Encoder: multichannel PCM in, framed latent bytes out. */
int msce_encoder_open(msce_model* model, int chunk_len, int quantize, int input_sample_width,
                      msce_encoder** out);
/* interleaved samples, frame-major; count is the number of time samples. */
int msce_encoder_push(msce_encoder* enc, const float* interleaved, int64_t count);
int msce_encoder_finish(msce_encoder* enc);
/* Drains pending wire bytes; returns the byte count (0 when none pending). */
int64_t msce_encoder_read(msce_encoder* enc, void* buf, int64_t cap);
int msce_encoder_stats(msce_encoder* enc, char** out_json);
void msce_encoder_free(msce_encoder* enc);

/* Decoder: framed latent bytes in, multichannel PCM out. */
int msce_decoder_open(msce_model* model, msce_decoder** out);
int msce_decoder_push(msce_decoder* dec, const void* bytes, int64_t count);
int msce_decoder_finish(msce_decoder* dec);
/* Reads decoded samples, interleaved; returns the number of time samples. */
int64_t msce_decoder_read(msce_decoder* dec, float* interleaved, int64_t cap_samples);
int msce_decoder_channels(msce_decoder* dec);
int msce_decoder_sample_rate(msce_decoder* dec);
int msce_decoder_stats(msce_decoder* dec, char** out_json);
void msce_decoder_free(msce_decoder* dec);

/* File-level wrappers used by the command-line endpoints. The sink/source
 * callbacks move raw stream bytes; sink returns the count written (negative
 * on failure), source returns the count read, 0 on EOF, negative on failure. */
typedef int64_t (*msce_write_fn)(void* user, const void* data, int64_t count);
typedef int64_t (*msce_read_fn)(void* user, void* buf, int64_t cap);

int msce_encode_wav(msce_model* model, const char* in_wav, int chunk_len, int quantize,
                    msce_write_fn sink, void* user, char** out_stats_json);
/* Writes whatever decodes cleanly even when the stream dies mid-frame (the
 * partial WAV is flushed before the error status is returned). */
int msce_decode_to_wav(msce_model* model, msce_read_fn source, void* user, const char* out_wav,
                       char** out_stats_json);

#ifdef __cplusplus
}
#endif

#endif /* MIMOSCE_H */
