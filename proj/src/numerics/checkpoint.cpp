#include "scn/numerics/checkpoint.hpp"

#include "scn/numerics/atomic_file.hpp"
#include "scn/numerics/binary_io.hpp"

#include <array>
#include <fstream>

namespace scn {

namespace {
constexpr std::array<char, 8> kMagic = {'S', 'C', 'N', 'C', 'K', 'P', 'T', '\0'};
}

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const ParameterMap<Scalar>& params) {
  write_atomically(
      path,
      [&](std::ostream& os) {
        os.write(kMagic.data(), kMagic.size());
        binary::write_le<std::uint32_t>(os, kCheckpointVersion);
        binary::write_le<std::uint32_t>(os, sizeof(Scalar));
        binary::write_le<std::uint64_t>(os, params.size());
        for (const auto& [name, tensor] : params) {
          binary::write_string(os, name);
          binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.rank()));
          for (Index e : tensor.shape()) binary::write_le<std::uint64_t>(os, e);
          for (Index i = 0; i < tensor.size(); ++i) binary::write_le<Scalar>(os, tensor.value()[i]);
        }
      },
      true);
}

template <typename Scalar>
ParameterMap<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw binary::FormatError(path.string() + " is not a checkpoint archive");
  }
  const auto version = binary::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw binary::FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto width = binary::read_le<std::uint32_t>(is);
  if (width != 4 && width != 8) {
    throw binary::FormatError("bad float width " + std::to_string(width));
  }
  const auto count = binary::read_le<std::uint64_t>(is);
  ParameterMap<Scalar> out;
  for (std::uint64_t e = 0; e < count; ++e) {
    std::string name = binary::read_string(is);
    const auto rank = binary::read_le<std::uint32_t>(is);
    if (rank > 8) throw binary::FormatError("rank too large for entry " + name);
    Shape shape(rank);
    for (auto& extent : shape) extent = static_cast<Index>(binary::read_le<std::uint64_t>(is));
    VectorX<Scalar> values(numel(shape));
    for (Index i = 0; i < values.size(); ++i) {
      values[i] = width == 4 ? static_cast<Scalar>(binary::read_le<float>(is))
                             : static_cast<Scalar>(binary::read_le<double>(is));
    }
    out.emplace(std::move(name), Tensor<Scalar>(std::move(shape), std::move(values)));
  }
  return out;
}

template <typename Scalar>
void restore_parameters(const ParameterMap<Scalar>& archived, ParameterMap<Scalar>& live) {
  for (auto& [name, tensor] : live) {
    auto it = archived.find(name);
    if (it == archived.end()) throw binary::FormatError("checkpoint lacks parameter " + name);
    if (it->second.shape() != tensor.shape()) {
      throw DimensionError("checkpoint parameter " + name + " has shape " +
                           to_string(it->second.shape()) + ", model expects " +
                           to_string(tensor.shape()));
    }
    tensor.mutable_value() = it->second.value();
  }
}

template void save_checkpoint<float>(const std::filesystem::path&, const ParameterMap<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const ParameterMap<double>&);
template ParameterMap<float> load_checkpoint<float>(const std::filesystem::path&);
template ParameterMap<double> load_checkpoint<double>(const std::filesystem::path&);
template void restore_parameters<float>(const ParameterMap<float>&, ParameterMap<float>&);
template void restore_parameters<double>(const ParameterMap<double>&, ParameterMap<double>&);

}  // namespace scn
