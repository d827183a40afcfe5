#include "scn/ingest/descriptors.hpp"

#include "scn/numerics/atomic_file.hpp"
#include "scn/numerics/binary_io.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>

namespace scn {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'C', 'N', 'D', 'E', 'S', 'C', '\0'};

void check_length(const DescriptorSet& set, const char* field, Eigen::Index got,
                  Eigen::Index want) {
  if (got != want) {
    throw DataError("descriptor '" + set.consumer_id + "': " + field + " has length " +
                    std::to_string(got) + ", expected " + std::to_string(want));
  }
}

void check_range(const DescriptorSet& set, const char* field, const Eigen::VectorXf& v,
                 float lo, float hi) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] >= lo && v[i] <= hi)) {
      throw DataError("descriptor '" + set.consumer_id + "': " + field + "[" +
                      std::to_string(i) + "] = " + std::to_string(v[i]) + " out of range");
    }
  }
}

void write_floats(std::ostream& os, const Eigen::VectorXf& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) binary::write_le<float>(os, v[i]);
}

Eigen::VectorXf read_floats(std::istream& is, Eigen::Index n) {
  Eigen::VectorXf v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = binary::read_le<float>(is);
  return v;
}

}  // namespace

void validate_descriptor(const DescriptorSet& set, const DescriptorLayout& layout) {
  if (set.consumer_id.empty()) throw DataError("descriptor with empty consumer id");
  check_length(set, "fa", set.fa.size(), kFacialAttributes);
  check_length(set, "pdm", set.pdm.size(), layout.d_pdm);
  check_length(set, "fl", set.fl.size(), layout.fl_size());
  check_length(set, "fd", set.fd.size(), kFacialDistances);
  check_length(set, "image", set.image.size(), layout.image_values());
  check_range(set, "fa", set.fa, 0.0f, 1.0f);
  check_range(set, "fl", set.fl, 0.0f, 1.0f);
  check_range(set, "fd", set.fd, 0.0f, std::numeric_limits<float>::max());
  check_range(set, "image", set.image, 0.0f, 1.0f);
  if (!set.pdm.allFinite()) throw DataError("descriptor '" + set.consumer_id + "': pdm not finite");
}

void write_descriptors(std::ostream& out, const DescriptorFile& file) {
  std::set<std::string_view> ids;
  for (const auto& set : file.sets) {
    validate_descriptor(set, file.layout);
    if (!ids.insert(set.consumer_id).second) {
      throw DataError("duplicate descriptor id '" + set.consumer_id + "'");
    }
  }
  out.write(kMagic.data(), kMagic.size());
  binary::write_le<std::uint32_t>(out, kDescriptorVersion);
  binary::write_le<std::uint32_t>(out, file.layout.n_lm);
  binary::write_le<std::uint32_t>(out, file.layout.d_pdm);
  binary::write_le<std::uint32_t>(out, file.layout.image_size);
  binary::write_le<std::uint32_t>(out, file.layout.channels);
  for (const auto& set : file.sets) {
    binary::write_string(out, set.consumer_id);
    write_floats(out, set.fa);
    write_floats(out, set.pdm);
    write_floats(out, set.fl);
    write_floats(out, set.fd);
    write_floats(out, set.image);
  }
}

DescriptorFile read_descriptors(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError("not a descriptor file (bad magic)");
  }
  DescriptorFile file;
  try {
    const auto version = binary::read_le<std::uint32_t>(in);
    if (version != kDescriptorVersion) {
      throw DataError("unsupported descriptor file version " + std::to_string(version));
    }
    file.layout.n_lm = binary::read_le<std::uint32_t>(in);
    file.layout.d_pdm = binary::read_le<std::uint32_t>(in);
    file.layout.image_size = binary::read_le<std::uint32_t>(in);
    file.layout.channels = binary::read_le<std::uint32_t>(in);
  } catch (const binary::FormatError& e) {
    throw DataError(std::string("descriptor header: ") + e.what());
  }
  const auto& L = file.layout;
  if (L.channels != 1 && L.channels != 3) {
    throw DataError("descriptor header: channels must be 1 or 3");
  }
  std::set<std::string> ids;
  while (in.peek() != std::char_traits<char>::eof()) {
    DescriptorSet set;
    try {
      set.consumer_id = binary::read_string(in, 4096);
    } catch (const binary::FormatError& e) {
      throw DataError("descriptor record " + std::to_string(file.sets.size()) + ": " + e.what());
    }
    try {
      set.fa = read_floats(in, kFacialAttributes);
      set.pdm = read_floats(in, L.d_pdm);
      set.fl = read_floats(in, L.fl_size());
      set.fd = read_floats(in, kFacialDistances);
      set.image = read_floats(in, L.image_values());
    } catch (const binary::FormatError&) {
      throw DataError("descriptor '" + set.consumer_id +
                      "': record shorter than the header layout requires");
    }
    validate_descriptor(set, L);
    if (!ids.insert(set.consumer_id).second) {
      throw DataError("duplicate descriptor id '" + set.consumer_id + "'");
    }
    file.sets.push_back(std::move(set));
  }
  return file;
}

void save_descriptors(const std::filesystem::path& path, const DescriptorFile& file) {
  write_atomically(path, [&](std::ostream& os) { write_descriptors(os, file); }, true);
}

DescriptorFile load_descriptors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open descriptor file " + path.string());
  return read_descriptors(in);
}

std::vector<std::string> vector_column_names(const DescriptorLayout& layout) {
  std::vector<std::string> names;
  auto add = [&](const char* prefix, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) names.push_back(std::string(prefix) + "[" + std::to_string(i) + "]");
  };
  add("fa", kFacialAttributes);
  add("pdm", layout.d_pdm);
  add("fl", layout.fl_size());
  add("fd", kFacialDistances);
  return names;
}

Eigen::MatrixXd vector_columns(const DescriptorFile& file) {
  const auto& L = file.layout;
  const Eigen::Index width = kFacialAttributes + L.d_pdm + L.fl_size() + kFacialDistances;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(file.sets.size()), width);
  for (std::size_t i = 0; i < file.sets.size(); ++i) {
    const auto& s = file.sets[i];
    out.row(static_cast<Eigen::Index>(i)) << s.fa.cast<double>().transpose(),
        s.pdm.cast<double>().transpose(), s.fl.cast<double>().transpose(),
        s.fd.cast<double>().transpose();
  }
  return out;
}

}  // namespace scn
