#include "popgap/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "popgap/errors.hpp"

namespace popgap {
namespace {

// NIfTI-1 header, 348 bytes. Only the fields this toolkit reads or writes
// are commented; the rest ride along zeroed.
#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;    // must be 348
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];        // dim[0] = #dims, dim[1..3] = grid
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];            // pixdim[1..3] = spacing (mm)
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];              // "n+1\0" for single-file
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must pack to 348 bytes");

enum NiftiDatatype : std::int16_t {
  DT_UINT8 = 2,
  DT_INT16 = 4,
  DT_INT32 = 8,
  DT_FLOAT32 = 16,
  DT_FLOAT64 = 64,
  DT_INT8 = 256,
  DT_UINT16 = 512,
  DT_UINT32 = 768,
  DT_INT64 = 1024,
  DT_UINT64 = 1280,
};

template <typename T>
void byteswap_inplace(T& value) {
  auto* bytes = reinterpret_cast<unsigned char*>(&value);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
    std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
}

void byteswap_header(Nifti1Header& h) {
  byteswap_inplace(h.sizeof_hdr);
  byteswap_inplace(h.extents);
  byteswap_inplace(h.session_error);
  for (auto& v : h.dim) byteswap_inplace(v);
  byteswap_inplace(h.intent_p1);
  byteswap_inplace(h.intent_p2);
  byteswap_inplace(h.intent_p3);
  byteswap_inplace(h.intent_code);
  byteswap_inplace(h.datatype);
  byteswap_inplace(h.bitpix);
  byteswap_inplace(h.slice_start);
  for (auto& v : h.pixdim) byteswap_inplace(v);
  byteswap_inplace(h.vox_offset);
  byteswap_inplace(h.scl_slope);
  byteswap_inplace(h.scl_inter);
  byteswap_inplace(h.slice_end);
  byteswap_inplace(h.cal_max);
  byteswap_inplace(h.cal_min);
  byteswap_inplace(h.slice_duration);
  byteswap_inplace(h.toffset);
  byteswap_inplace(h.glmax);
  byteswap_inplace(h.glmin);
  byteswap_inplace(h.qform_code);
  byteswap_inplace(h.sform_code);
  byteswap_inplace(h.quatern_b);
  byteswap_inplace(h.quatern_c);
  byteswap_inplace(h.quatern_d);
  byteswap_inplace(h.qoffset_x);
  byteswap_inplace(h.qoffset_y);
  byteswap_inplace(h.qoffset_z);
  for (auto& v : h.srow_x) byteswap_inplace(v);
  for (auto& v : h.srow_y) byteswap_inplace(v);
  for (auto& v : h.srow_z) byteswap_inplace(v);
}

class GzReader {
public:
  explicit GzReader(const std::string& path) : file_(gzopen(path.c_str(), "rb")) {
    if (!file_) throw IoError("cannot open file: " + path);
  }
  ~GzReader() {
    if (file_) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read_exact(void* dst, std::size_t bytes, const std::string& what) {
    auto* out = static_cast<char*>(dst);
    std::size_t done = 0;
    while (done < bytes) {
      const unsigned chunk =
          static_cast<unsigned>(std::min<std::size_t>(bytes - done, 1u << 28));
      const int got = gzread(file_, out + done, chunk);
      if (got <= 0)
        throw MalformedHeaderError("truncated NIfTI file while reading " + what);
      done += static_cast<std::size_t>(got);
    }
  }

  void skip(std::size_t bytes) {
    if (bytes == 0) return;
    if (gzseek(file_, static_cast<z_off_t>(bytes), SEEK_CUR) < 0)
      throw MalformedHeaderError("truncated NIfTI file while skipping extensions");
  }

private:
  gzFile file_;
};

template <typename Src>
void convert_voxels(GzReader& in, std::size_t n, bool swap, std::vector<std::uint16_t>& out,
                    const std::string& path) {
  std::vector<Src> raw(n);
  in.read_exact(raw.data(), n * sizeof(Src), "voxel data of " + path);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Src v = raw[i];
    if (swap && sizeof(Src) > 1) byteswap_inplace(v);
    if constexpr (std::is_signed_v<Src>) {
      if (v < 0)
        throw UnknownLabelError("negative voxel value " + std::to_string(+v) + " in " + path);
    }
    const auto wide = static_cast<std::uint64_t>(v);
    if (wide > 65535)
      throw UnknownLabelError("voxel value " + std::to_string(wide) + " too large in " + path);
    out[i] = static_cast<std::uint16_t>(wide);
  }
}

bool is_integer_datatype(std::int16_t dt) {
  switch (dt) {
    case DT_UINT8:
    case DT_INT8:
    case DT_INT16:
    case DT_UINT16:
    case DT_INT32:
    case DT_UINT32:
    case DT_INT64:
    case DT_UINT64:
      return true;
    default:
      return false;
  }
}

int bytes_per_voxel(std::int16_t dt) {
  switch (dt) {
    case DT_UINT8:
    case DT_INT8:
      return 1;
    case DT_INT16:
    case DT_UINT16:
      return 2;
    case DT_INT32:
    case DT_UINT32:
      return 4;
    case DT_INT64:
    case DT_UINT64:
      return 8;
    default:
      return 0;
  }
}

std::string subject_id_from_path(const std::string& path) {
  std::string stem = std::filesystem::path(path).filename().string();
  for (const char* ext : {".gz", ".nii"}) {
    const std::size_t len = std::strlen(ext);
    if (stem.size() > len && stem.compare(stem.size() - len, len, ext) == 0)
      stem.erase(stem.size() - len);
  }
  return stem;
}

void check_affine_axis_aligned(const Nifti1Header& h, const std::string& path,
                               std::vector<std::string>* warnings) {
  if (!warnings) return;
  bool aligned = true;
  if (h.sform_code > 0) {
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int r = 0; r < 3 && aligned; ++r)
      for (int c = 0; c < 3; ++c)
        if (r != c && std::abs(rows[r][c]) > 1e-4f * (std::abs(rows[r][r]) + 1e-6f)) {
          aligned = false;
          break;
        }
  } else if (h.qform_code > 0) {
    aligned = std::abs(h.quatern_b) < 1e-6f && std::abs(h.quatern_c) < 1e-6f &&
              std::abs(h.quatern_d) < 1e-6f;
  }
  if (!aligned)
    warnings->push_back(path +
                        ": affine is not axis-aligned; rotation/shear is ignored and metrics "
                        "are computed on the stored grid with header pixdim spacing");
}

LabelVolume load_impl(const std::string& path, const LabelDictionary* dict,
                      std::vector<std::string>* warnings) {
  if (!std::filesystem::exists(path))
    throw FileNotFoundError("no such file: " + path);

  GzReader in(path);
  Nifti1Header h{};
  in.read_exact(&h, sizeof h, "header of " + path);

  bool swap = false;
  if (h.sizeof_hdr != 348) {
    std::int32_t swapped = h.sizeof_hdr;
    byteswap_inplace(swapped);
    if (swapped != 348)
      throw MalformedHeaderError(path + ": sizeof_hdr is not 348; not a NIfTI-1 file");
    swap = true;
    byteswap_header(h);
  }

  if (std::memcmp(h.magic, "n+1", 4) != 0) {
    if (std::memcmp(h.magic, "ni1", 4) == 0)
      throw MalformedHeaderError(path + ": two-file (.hdr/.img) NIfTI is not supported");
    throw MalformedHeaderError(path + ": bad magic; expected \"n+1\"");
  }

  if (h.dim[0] < 3 || h.dim[0] > 7)
    throw MalformedHeaderError(path + ": dim[0]=" + std::to_string(h.dim[0]) +
                               "; need a 3D volume");
  for (int a = 4; a <= h.dim[0]; ++a)
    if (h.dim[a] > 1)
      throw MalformedHeaderError(path + ": higher dimension " + std::to_string(a) +
                                 " has extent " + std::to_string(h.dim[a]) +
                                 "; only 3D label volumes are supported");
  for (int a = 1; a <= 3; ++a)
    if (h.dim[a] <= 0)
      throw MalformedHeaderError(path + ": non-positive dim[" + std::to_string(a) + "]");

  if (!is_integer_datatype(h.datatype)) {
    if (h.datatype == DT_FLOAT32 || h.datatype == DT_FLOAT64)
      throw NonIntegerDataError(path + ": floating-point voxel data; labels must be integers");
    throw NonIntegerDataError(path + ": unsupported datatype " + std::to_string(h.datatype));
  }
  if (h.bitpix != 8 * bytes_per_voxel(h.datatype))
    throw MalformedHeaderError(path + ": bitpix " + std::to_string(h.bitpix) +
                               " inconsistent with datatype");

  LabelVolume vol;
  vol.subject_id = subject_id_from_path(path);
  vol.dims = {h.dim[1], h.dim[2], h.dim[3]};
  for (int a = 0; a < 3; ++a) {
    const float sp = h.pixdim[a + 1];
    if (!(sp > 0.0f))
      throw MalformedHeaderError(path + ": non-positive pixdim on axis " + std::to_string(a));
    vol.spacing[a] = static_cast<double>(sp);
  }

  check_affine_axis_aligned(h, path, warnings);

  const std::int64_t offset = static_cast<std::int64_t>(h.vox_offset);
  if (offset < 348)
    throw MalformedHeaderError(path + ": vox_offset " + std::to_string(offset) + " < 348");
  in.skip(static_cast<std::size_t>(offset) - sizeof h);

  const auto n = static_cast<std::size_t>(voxel_count(vol.dims));
  switch (h.datatype) {
    case DT_UINT8: convert_voxels<std::uint8_t>(in, n, swap, vol.labels, path); break;
    case DT_INT8: convert_voxels<std::int8_t>(in, n, swap, vol.labels, path); break;
    case DT_INT16: convert_voxels<std::int16_t>(in, n, swap, vol.labels, path); break;
    case DT_UINT16: convert_voxels<std::uint16_t>(in, n, swap, vol.labels, path); break;
    case DT_INT32: convert_voxels<std::int32_t>(in, n, swap, vol.labels, path); break;
    case DT_UINT32: convert_voxels<std::uint32_t>(in, n, swap, vol.labels, path); break;
    case DT_INT64: convert_voxels<std::int64_t>(in, n, swap, vol.labels, path); break;
    case DT_UINT64: convert_voxels<std::uint64_t>(in, n, swap, vol.labels, path); break;
    default: throw NonIntegerDataError(path + ": unsupported datatype");
  }

  validate_volume(vol, dict);
  return vol;
}

}  // namespace

LabelVolume load_label_volume(const std::string& path, const LabelDictionary& expected_dict,
                              std::vector<std::string>* warnings) {
  return load_impl(path, &expected_dict, warnings);
}

LabelVolume load_label_volume_unchecked(const std::string& path,
                                        std::vector<std::string>* warnings) {
  return load_impl(path, nullptr, warnings);
}

void write_label_volume(const LabelVolume& vol, const std::string& path) {
  validate_volume(vol, nullptr);

  std::uint16_t max_label = 0;
  for (auto v : vol.labels) max_label = std::max(max_label, v);
  const bool narrow = max_label <= 255;

  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(vol.dims[0]);
  h.dim[2] = static_cast<std::int16_t>(vol.dims[1]);
  h.dim[3] = static_cast<std::int16_t>(vol.dims[2]);
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  for (int a = 0; a < 3; ++a) {
    if (vol.dims[a] > 32767)
      throw IoError("dimension too large for NIfTI-1 int16 dim field");
  }
  h.datatype = narrow ? DT_UINT8 : DT_UINT16;
  h.bitpix = narrow ? 8 : 16;
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(vol.spacing[a]);
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.xyzt_units = 2;  // millimetres
  std::snprintf(h.descrip, sizeof h.descrip, "popgap label volume");
  h.sform_code = 1;
  h.srow_x[0] = static_cast<float>(vol.spacing[0]);
  h.srow_y[1] = static_cast<float>(vol.spacing[1]);
  h.srow_z[2] = static_cast<float>(vol.spacing[2]);
  std::memcpy(h.magic, "n+1", 4);

  const char extension[4] = {0, 0, 0, 0};

  std::vector<std::uint8_t> narrow_data;
  const void* payload = nullptr;
  std::size_t payload_bytes = 0;
  if (narrow) {
    narrow_data.resize(vol.labels.size());
    for (std::size_t i = 0; i < vol.labels.size(); ++i)
      narrow_data[i] = static_cast<std::uint8_t>(vol.labels[i]);
    payload = narrow_data.data();
    payload_bytes = narrow_data.size();
  } else {
    payload = vol.labels.data();
    payload_bytes = vol.labels.size() * 2;
  }

  const bool compress = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  if (compress) {
    gzFile out = gzopen(path.c_str(), "wb6");
    if (!out) throw IoError("cannot create file: " + path);
    bool ok = gzwrite(out, &h, sizeof h) == static_cast<int>(sizeof h) &&
              gzwrite(out, extension, 4) == 4;
    const auto* bytes = static_cast<const char*>(payload);
    std::size_t done = 0;
    while (ok && done < payload_bytes) {
      const unsigned chunk =
          static_cast<unsigned>(std::min<std::size_t>(payload_bytes - done, 1u << 28));
      ok = gzwrite(out, bytes + done, chunk) == static_cast<int>(chunk);
      done += chunk;
    }
    const bool closed_ok = gzclose(out) == Z_OK;
    if (!ok || !closed_ok) throw IoError("failed writing " + path);
  } else {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create file: " + path);
    out.write(reinterpret_cast<const char*>(&h), sizeof h);
    out.write(extension, 4);
    out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
    if (!out) throw IoError("failed writing " + path);
  }
}

}  // namespace popgap
