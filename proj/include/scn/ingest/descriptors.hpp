#pragma once

#include "scn/ingest/domain.hpp"

#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

namespace scn {

/// Dimensions shared by every record of one descriptor file.
struct DescriptorLayout {
  std::uint32_t n_lm = 68;
  std::uint32_t d_pdm = 40;
  std::uint32_t image_size = 112;
  std::uint32_t channels = 1;

  Eigen::Index fl_size() const { return 2 * static_cast<Eigen::Index>(n_lm); }
  Eigen::Index image_values() const {
    return static_cast<Eigen::Index>(channels) * image_size * image_size;
  }
  bool operator==(const DescriptorLayout&) const = default;
};

struct DescriptorFile {
  DescriptorLayout layout;
  std::vector<DescriptorSet> sets;
};

inline constexpr std::uint32_t kDescriptorVersion = 1;

/// Throws DataError naming the consumer when a vector length or value range
/// does not fit the layout.
void validate_descriptor(const DescriptorSet& set, const DescriptorLayout& layout);

void write_descriptors(std::ostream& out, const DescriptorFile& file);
DescriptorFile read_descriptors(std::istream& in);

void save_descriptors(const std::filesystem::path& path, const DescriptorFile& file);
DescriptorFile load_descriptors(const std::filesystem::path& path);

/// Names of the flat vector-descriptor columns in stacking order:
/// fa[0..15], pdm[..], fl[..], fd[0..169].
std::vector<std::string> vector_column_names(const DescriptorLayout& layout);

/// n x (16 + d_pdm + 2 n_lm + 170) matrix of the vector descriptors, one row
/// per set, columns ordered as vector_column_names.
Eigen::MatrixXd vector_columns(const DescriptorFile& file);

}  // namespace scn
