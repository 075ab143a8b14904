#ifndef SYNCFORENSICS_H
#define SYNCFORENSICS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_ARGUMENT = 1,
  SF_STATUS_INVALID_UTF8 = 2,
  SF_STATUS_AUTHENTICATION = 3,
  SF_STATUS_NOT_INITIALIZED = 4,
  SF_STATUS_ALREADY_INITIALIZED = 5,
  SF_STATUS_BACKEND = 6,
  SF_STATUS_CORRUPT = 7,
  SF_STATUS_IO = 8,
  SF_STATUS_ENGINE = 9,
  SF_STATUS_PANIC = 10,
} SfStatus;

typedef struct SfCarver SfCarver;

typedef struct SfEngine SfEngine;

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on this thread.
 */
const char *sf_last_error(void);

/**
 * Releases a string returned through an `out_json` pointer.
 * `s` is null or an unfreed string from this library.
 */
void sf_string_free(char *s);

/**
 * Creates an engine keeping per-user state in `user_dir`.
 * `kdf_iterations` of 0 keeps the default. Returns null on failure.
 */
struct SfEngine *sf_engine_new(const char *user_dir, uint32_t kdf_iterations);

/**
 * `h` is null or a live handle.
 */
void sf_engine_free(struct SfEngine *h);

/**
 * Creates a repository at `storage` (directory or WebDAV URL) with `folder`
 * as its first client. Writes the init outcome, including both links.
 */
enum SfStatus sf_engine_init(const struct SfEngine *h,
                             const char *folder,
                             const char *storage,
                             const char *password,
                             char **out_json);

/**
 * Joins the repository named by a share link.
 */
enum SfStatus sf_engine_connect(const struct SfEngine *h,
                                const char *folder,
                                const char *link,
                                const char *password,
                                char **out_json);

enum SfStatus sf_engine_status(const struct SfEngine *h, const char *folder, char **out_json);

/**
 * Uploads local changes. The JSON has `uploaded: false` when there was
 * nothing to do.
 */
enum SfStatus sf_engine_up(const struct SfEngine *h, const char *folder, char **out_json);

enum SfStatus sf_engine_down(const struct SfEngine *h, const char *folder, char **out_json);

/**
 * A config carver using up to `threads` workers (0 means one).
 */
struct SfCarver *sf_carver_new(uint32_t threads);

/**
 * `h` is null or a live handle.
 */
void sf_carver_free(struct SfCarver *h);

/**
 * Carves config documents from `len` bytes at `data`. The JSON carries
 * `strong` and `weak` hit arrays.
 */
enum SfStatus sf_carver_scan(const struct SfCarver *h,
                             const uint8_t *data,
                             size_t len,
                             char **out_json);

/**
 * Pairs HTTP messages from an interleaved stream and reports master salts.
 */
enum SfStatus sf_net_parse(const uint8_t *data, size_t len, char **out_json);

#endif  /* SYNCFORENSICS_H */
