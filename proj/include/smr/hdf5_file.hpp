#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <hdf5.h>

namespace smr::h5 {

/// Owns one hid_t and closes it with the matching H5*close call.
class Handle {
  public:
    enum class Kind { file, group, dataset, dataspace, datatype, attribute, plist };

    Handle() = default;
    Handle(hid_t id, Kind kind) : id_(id), kind_(kind) {}
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    Handle(Handle&& other) noexcept : id_(other.id_), kind_(other.kind_) { other.id_ = -1; }
    Handle& operator=(Handle&& other) noexcept;
    ~Handle() { close(); }

    hid_t id() const { return id_; }
    bool valid() const { return id_ >= 0; }
    void close();

  private:
    hid_t id_ = -1;
    Kind kind_ = Kind::file;
};

/// Minimal typed access to an HDF5 file. All methods throw DataError on
/// failure; missing objects are reported by path.
class File {
  public:
    enum class Mode { read, truncate };

    File(const std::string& path, Mode mode);

    bool exists(const std::string& path) const;

    std::vector<hsize_t> dataset_shape(const std::string& path) const;

    void write(const std::string& path, const std::vector<double>& data,
               const std::vector<hsize_t>& shape);
    void write_float(const std::string& path, const std::vector<float>& data,
                     const std::vector<hsize_t>& shape);
    void write(const std::string& path, const std::vector<std::int64_t>& data,
               const std::vector<hsize_t>& shape);
    void write(const std::string& path, const std::string& text);

    std::vector<double> read_double(const std::string& path) const;
    std::vector<float> read_float(const std::string& path) const;
    std::vector<std::int64_t> read_int(const std::string& path) const;
    std::string read_string(const std::string& path) const;

    /// Reads a dataset of complex values; accepts either a trailing
    /// dimension of size 2 or a compound type with two floating members.
    /// Returns the flat data; `shape` receives the logical (complex) shape.
    std::vector<std::complex<double>> read_complex(const std::string& path,
                                                   std::vector<hsize_t>& shape) const;

    void set_attr(const std::string& obj_path, const std::string& name, const std::string& value);
    std::string get_attr(const std::string& obj_path, const std::string& name) const;
    std::vector<std::string> list_attrs(const std::string& obj_path) const;

    void ensure_group(const std::string& path);

    hid_t id() const { return file_.id(); }

  private:
    Handle file_;
};

/// Suppresses the library's stderr error stack for the current scope.
class SilenceErrors {
  public:
    SilenceErrors();
    ~SilenceErrors();

  private:
    H5E_auto2_t old_func_ = nullptr;
    void* old_data_ = nullptr;
};

} // namespace smr::h5
