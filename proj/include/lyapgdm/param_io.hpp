#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lyapgdm/mlp.hpp"

namespace lyapgdm::nn {

// Parameter blob layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "LYGDMPRM"
//   offset 8   u32       header length H in bytes
//   offset 12  H bytes   UTF-8 JSON header:
//                          {"format":1,"dtype":"f32"|"f64","count":<n>,"seed":<u64>,
//                           "widths":[...],"hidden":["silu",...],"output":"identity"}
//   offset 12+H          n values, IEEE-754 little-endian, dtype width each
//
// Values follow ParamTensor order: per layer, the column-major weight block
// then the bias.
struct BlobHeader {
  MlpSpec spec;
  std::string dtype;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
};

template <typename Scalar>
void save_params(const std::filesystem::path& path, const ParamTensor<Scalar>& params,
                 const MlpSpec& spec, std::uint64_t seed);

// Loads a blob, converting dtype when it differs from Scalar. Throws
// std::runtime_error on I/O or format errors.
template <typename Scalar>
ParamTensor<Scalar> load_params(const std::filesystem::path& path, BlobHeader* header = nullptr);

}  // namespace lyapgdm::nn
