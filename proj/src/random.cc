#include "cltr/random.h"

namespace cltr {
namespace {

uint64_t Mix(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t DeriveSeed(uint64_t base, uint64_t stream) {
  return Mix(Mix(base) ^ Mix(stream + 0x632be59bd9b4e019ULL));
}

uint64_t DeriveSeed(uint64_t base, std::initializer_list<uint64_t> streams) {
  uint64_t seed = base;
  for (uint64_t s : streams) seed = DeriveSeed(seed, s);
  return seed;
}

uint64_t HashLabel(std::string_view label) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cltr
