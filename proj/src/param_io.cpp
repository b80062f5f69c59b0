#include "lyapgdm/param_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <type_traits>

namespace lyapgdm::nn {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'Y', 'G', 'D', 'M', 'P', 'R', 'M'};

static_assert(std::endian::native == std::endian::little,
              "parameter blobs are written in native order; big-endian hosts need byte swapping");

template <typename Scalar>
constexpr const char* dtype_name() {
  return std::is_same_v<Scalar, float> ? "f32" : "f64";
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("parameter blob truncated");
  return v;
}

}  // namespace

template <typename Scalar>
void save_params(const std::filesystem::path& path, const ParamTensor<Scalar>& params,
                 const MlpSpec& spec, std::uint64_t seed) {
  if (params.size() != spec.param_count()) {
    throw std::runtime_error("save_params: parameter count does not match spec");
  }
  nlohmann::json header;
  header["format"] = 1;
  header["dtype"] = dtype_name<Scalar>();
  header["count"] = params.size();
  header["seed"] = seed;
  header["widths"] = spec.widths;
  std::vector<std::string> hidden;
  for (Activation a : spec.hidden) hidden.emplace_back(to_string(a));
  header["hidden"] = hidden;
  header["output"] = std::string(to_string(spec.output));
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  write_raw(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(reinterpret_cast<const char*>(params.values.data()),
           static_cast<std::streamsize>(params.values.size() * sizeof(Scalar)));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

template <typename Scalar>
ParamTensor<Scalar> load_params(const std::filesystem::path& path, BlobHeader* out_header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open parameter blob " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw std::runtime_error(path.string() + ": not a parameter blob");
  const auto len = read_raw<std::uint32_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), len);
  if (!is) throw std::runtime_error(path.string() + ": truncated header");

  BlobHeader h;
  try {
    const auto j = nlohmann::json::parse(text);
    h.dtype = j.at("dtype").get<std::string>();
    h.count = j.at("count").get<std::uint64_t>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.spec.widths = j.at("widths").get<std::vector<int>>();
    for (const auto& a : j.at("hidden")) h.spec.hidden.push_back(activation_from_string(a.get<std::string>()));
    h.spec.output = activation_from_string(j.at("output").get<std::string>());
    h.spec.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": bad header: " + e.what());
  }
  if (h.count != h.spec.param_count()) {
    throw std::runtime_error(path.string() + ": count does not match layer widths");
  }

  ParamTensor<Scalar> p(h.spec);
  if (h.dtype == "f32") {
    std::vector<float> raw(h.count);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!is) throw std::runtime_error(path.string() + ": truncated values");
    for (std::size_t i = 0; i < raw.size(); ++i) p.values[i] = static_cast<Scalar>(raw[i]);
  } else if (h.dtype == "f64") {
    std::vector<double> raw(h.count);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(double)));
    if (!is) throw std::runtime_error(path.string() + ": truncated values");
    for (std::size_t i = 0; i < raw.size(); ++i) p.values[i] = static_cast<Scalar>(raw[i]);
  } else {
    throw std::runtime_error(path.string() + ": unknown dtype " + h.dtype);
  }
  p.touch();
  if (out_header) *out_header = std::move(h);
  return p;
}

template void save_params<float>(const std::filesystem::path&, const ParamTensor<float>&,
                                 const MlpSpec&, std::uint64_t);
template void save_params<double>(const std::filesystem::path&, const ParamTensor<double>&,
                                  const MlpSpec&, std::uint64_t);
template ParamTensor<float> load_params<float>(const std::filesystem::path&, BlobHeader*);
template ParamTensor<double> load_params<double>(const std::filesystem::path&, BlobHeader*);

}  // namespace lyapgdm::nn
