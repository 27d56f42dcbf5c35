#ifndef POPGAP_VOLUME_HPP
#define POPGAP_VOLUME_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "popgap/geometry.hpp"

namespace popgap {

/// Integer label → organ name. Label 0 is reserved for background and must
/// not appear as an entry.
class LabelDictionary {
public:
  LabelDictionary() = default;
  explicit LabelDictionary(std::map<std::uint16_t, std::string> entries);

  const std::map<std::uint16_t, std::string>& entries() const { return entries_; }
  bool contains(std::uint16_t label) const { return entries_.count(label) != 0; }
  const std::string& name(std::uint16_t label) const;
  std::uint16_t max_label() const;
  std::size_t size() const { return entries_.size(); }

private:
  std::map<std::uint16_t, std::string> entries_;
};

/// A dense 3D grid of organ labels with physical voxel spacing. Immutable
/// after construction; safe to share across worker threads.
struct LabelVolume {
  std::string subject_id;
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};  // mm, one entry per axis
  std::vector<std::uint16_t> labels;  // x fastest, size dims[0]*dims[1]*dims[2]

  std::uint16_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return labels[linear_index(dims, x, y, z)];
  }
};

// Checks size/spacing consistency and (when a dictionary is given) that
// every voxel value is either background or a dictionary entry.
void validate_volume(const LabelVolume& vol, const LabelDictionary* dict);

/// Binary organ mask on the same grid conventions as LabelVolume.
struct BinaryMask {
  Dims3 dims{0, 0, 0};
  std::vector<std::uint8_t> voxels;

  bool at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return voxels[linear_index(dims, x, y, z)] != 0;
  }
};

BinaryMask mask_for_label(const LabelVolume& vol, std::uint16_t label);

/// Grids tagged comparable: equal dims, spacing equal within 1e-4 mm per
/// axis. Only produced by validate_pair.
struct ValidatedPair {
  const LabelVolume* gt;
  const LabelVolume* pred;
};

inline constexpr double kSpacingToleranceMm = 1e-4;

ValidatedPair validate_pair(const LabelVolume& gt, const LabelVolume& pred);

}  // namespace popgap

#endif
