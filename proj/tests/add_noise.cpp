// add_noise <in.spkf> <out.spkf> <level> <seed>: multiplicative complex Gaussian noise.
#include <spikemap/spikemap.h>

#include <cstdio>
#include <cstdlib>

int main(int argc, char** argv) {
  if (argc != 5) {
    std::fprintf(stderr, "usage: %s in.spkf out.spkf level seed\n", argv[0]);
    return 2;
  }
  sm_field* in = nullptr;
  sm_field* out = nullptr;
  if (sm_field_read(argv[1], &in) != SM_OK ||
      sm_field_add_noise(in, std::atof(argv[3]), std::strtoull(argv[4], nullptr, 10), &out) != SM_OK ||
      sm_field_write(out, argv[2]) != SM_OK) {
    std::fprintf(stderr, "add_noise: %s\n", sm_last_error());
    return 1;
  }
  sm_field_destroy(out);
  sm_field_destroy(in);
  return 0;
}
