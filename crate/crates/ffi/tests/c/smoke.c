#include <stdio.h>
#include <string.h>

#include "hesearch.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      const char *err = hs_last_error();                              \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,          \
              err ? err : "no error message");                        \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  HsKeys *keys = NULL;
  CHECK(hs_keys_generate("unknown", 1, &keys) == HS_STATUS_INVALID_ARGUMENT);
  CHECK(keys == NULL && strstr(hs_last_error(), "unknown preset") != NULL);
  CHECK(hs_keys_generate("plain", 1, &keys) == HS_STATUS_OK);

  HsBuffer ct = {0};
  double value = 0.0;
  CHECK(hs_encrypt(keys, 12.5, &ct) == HS_STATUS_OK);
  CHECK(hs_decrypt(keys, ct.data, ct.len, &value) == HS_STATUS_OK);
  CHECK(value == 12.5);
  hs_buffer_free(&ct);
  CHECK(ct.data == NULL && ct.len == 0);

  const double values[] = {5.0, 3.0, 7.0, 3.0};
  HsDataset *data = NULL;
  CHECK(hs_dataset_encrypt(keys, values, 4, &data) == HS_STATUS_OK);
  CHECK(hs_dataset_len(data) == 4);

  HsServer *server = NULL;
  CHECK(hs_server_new(keys, data, 1.0, &server) == HS_STATUS_OK);
  const uint8_t bogus[] = {2, 0, 0, 0, 0, 0, 0, 0, 1};
  HsBuffer reply = {0};
  bool done = false;
  CHECK(hs_server_handle(server, bogus, sizeof bogus, &reply, &done) == HS_STATUS_PROTOCOL);
  CHECK(done && reply.len > 0 && reply.data[0] == 255);
  hs_buffer_free(&reply);

  hs_server_free(server);
  hs_dataset_free(data);
  hs_keys_free(keys);
  printf("ok %s\n", hs_version());
  return 0;
}
