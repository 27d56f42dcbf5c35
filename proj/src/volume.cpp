#include "popgap/volume.hpp"

#include <cmath>
#include <set>

#include "popgap/errors.hpp"

namespace popgap {

LabelDictionary::LabelDictionary(std::map<std::uint16_t, std::string> entries)
    : entries_(std::move(entries)) {
  if (entries_.count(0))
    throw Error("label 0 is reserved for background");
  std::set<std::string> names;
  for (const auto& [label, name] : entries_) {
    if (name.empty()) throw Error("empty organ name for label " + std::to_string(label));
    if (!names.insert(name).second)
      throw Error("duplicate organ name in label dictionary: " + name);
  }
}

const std::string& LabelDictionary::name(std::uint16_t label) const {
  auto it = entries_.find(label);
  if (it == entries_.end())
    throw UnknownLabelError("label " + std::to_string(label) + " not in dictionary");
  return it->second;
}

std::uint16_t LabelDictionary::max_label() const {
  return entries_.empty() ? 0 : entries_.rbegin()->first;
}

void validate_volume(const LabelVolume& vol, const LabelDictionary* dict) {
  if (vol.dims[0] <= 0 || vol.dims[1] <= 0 || vol.dims[2] <= 0)
    throw Error("volume dims must be positive");
  if (static_cast<std::int64_t>(vol.labels.size()) != voxel_count(vol.dims))
    throw Error("label array size does not match dims");
  for (int a = 0; a < 3; ++a)
    if (!(vol.spacing[a] > 0.0))
      throw Error("spacing must be positive on every axis");
  if (dict) {
    // Eager validation so metric code never sees a label outside the run's
    // dictionary. One pass, flags table indexed by value.
    std::vector<std::uint8_t> allowed(65536, 0);
    allowed[0] = 1;
    for (const auto& [label, name] : dict->entries()) allowed[label] = 1;
    for (std::size_t i = 0; i < vol.labels.size(); ++i) {
      if (!allowed[vol.labels[i]])
        throw UnknownLabelError("subject " + vol.subject_id + ": voxel value " +
                                std::to_string(vol.labels[i]) +
                                " absent from the label dictionary");
    }
  }
}

BinaryMask mask_for_label(const LabelVolume& vol, std::uint16_t label) {
  BinaryMask mask;
  mask.dims = vol.dims;
  mask.voxels.resize(vol.labels.size());
  for (std::size_t i = 0; i < vol.labels.size(); ++i)
    mask.voxels[i] = vol.labels[i] == label ? 1 : 0;
  return mask;
}

ValidatedPair validate_pair(const LabelVolume& gt, const LabelVolume& pred) {
  if (gt.dims != pred.dims)
    throw GridMismatchError(
        "grid mismatch: gt " + std::to_string(gt.dims[0]) + "x" + std::to_string(gt.dims[1]) +
        "x" + std::to_string(gt.dims[2]) + " vs pred " + std::to_string(pred.dims[0]) + "x" +
        std::to_string(pred.dims[1]) + "x" + std::to_string(pred.dims[2]));
  for (int a = 0; a < 3; ++a) {
    // A difference of exactly 1e-4 mm counts as a mismatch. The slack factor
    // keeps that boundary decision stable when the difference itself carries
    // float32-header or subtraction rounding (e.g. 1.5001 - 1.5 evaluates a
    // few ulps below 1e-4).
    if (std::abs(gt.spacing[a] - pred.spacing[a]) >= kSpacingToleranceMm * (1.0 - 1e-9))
      throw SpacingMismatchError("spacing mismatch on axis " + std::to_string(a) + ": " +
                                 std::to_string(gt.spacing[a]) + " vs " +
                                 std::to_string(pred.spacing[a]));
  }
  return ValidatedPair{&gt, &pred};
}

}  // namespace popgap
