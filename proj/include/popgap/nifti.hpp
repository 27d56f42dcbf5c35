#ifndef POPGAP_NIFTI_HPP
#define POPGAP_NIFTI_HPP

#include <string>
#include <vector>

#include "popgap/volume.hpp"

namespace popgap {

/// Reads a NIfTI-1 label volume (.nii or .nii.gz, detected by the 0x1F8B
/// gzip prefix). Integer data types only; spacing comes from header pixdim.
/// Voxels are kept in the stored (i fastest) order, the canonical order for
/// every metric in this toolkit. Every voxel value must be background or an
/// entry of `expected_dict`. Warnings (e.g. a non-axis-aligned affine) are
/// appended to `warnings` when provided.
LabelVolume load_label_volume(const std::string& path, const LabelDictionary& expected_dict,
                              std::vector<std::string>* warnings = nullptr);

// Same parsing without the dictionary check; used by tooling that only
// needs geometry.
LabelVolume load_label_volume_unchecked(const std::string& path,
                                        std::vector<std::string>* warnings = nullptr);

/// Writes a NIfTI-1 single-file volume. Compressed iff `path` ends in ".gz".
/// Data type is uint8 when all labels fit, uint16 otherwise; the affine is
/// the axis-aligned diagonal of the spacing.
void write_label_volume(const LabelVolume& vol, const std::string& path);

}  // namespace popgap

#endif
