#include "smr/hdf5_file.hpp"

#include <complex>
#include <cstring>

#include "smr/errors.hpp"

namespace smr::h5 {

namespace {

[[noreturn]] void fail(const std::string& what) { throw DataError("hdf5: " + what); }

std::vector<hsize_t> space_shape(hid_t space) {
    const int rank = H5Sget_simple_extent_ndims(space);
    if (rank < 0) fail("cannot query dataspace rank");
    std::vector<hsize_t> shape(static_cast<std::size_t>(rank));
    H5Sget_simple_extent_dims(space, shape.data(), nullptr);
    return shape;
}

hsize_t shape_count(const std::vector<hsize_t>& shape) {
    hsize_t n = 1;
    for (hsize_t s : shape) n *= s;
    return n;
}

// Splits "a/b/c" and creates intermediate groups as needed.
void create_parent_groups(hid_t file, const std::string& path) {
    std::string cur;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (path[i] == '/') {
            if (!cur.empty() && H5Lexists(file, cur.c_str(), H5P_DEFAULT) <= 0) {
                hid_t g = H5Gcreate2(file, cur.c_str(), H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT);
                if (g < 0) fail("cannot create group " + cur);
                H5Gclose(g);
            }
        }
        cur.push_back(path[i]);
    }
}

template <typename T>
void write_dataset(hid_t file, const std::string& path, const T* data,
                   const std::vector<hsize_t>& shape, hid_t mem_type, hid_t file_type) {
    create_parent_groups(file, path);
    Handle space(H5Screate_simple(int(shape.size()), shape.data(), nullptr),
                 Handle::Kind::dataspace);
    if (!space.valid()) fail("cannot create dataspace for " + path);
    Handle dset(H5Dcreate2(file, path.c_str(), file_type, space.id(), H5P_DEFAULT, H5P_DEFAULT,
                           H5P_DEFAULT),
                Handle::Kind::dataset);
    if (!dset.valid()) fail("cannot create dataset " + path);
    if (H5Dwrite(dset.id(), mem_type, H5S_ALL, H5S_ALL, H5P_DEFAULT, data) < 0)
        fail("cannot write dataset " + path);
}

template <typename T>
std::vector<T> read_dataset(hid_t file, const std::string& path, hid_t mem_type) {
    if (H5Lexists(file, path.c_str(), H5P_DEFAULT) <= 0) fail("missing dataset " + path);
    Handle dset(H5Dopen2(file, path.c_str(), H5P_DEFAULT), Handle::Kind::dataset);
    if (!dset.valid()) fail("cannot open dataset " + path);
    Handle space(H5Dget_space(dset.id()), Handle::Kind::dataspace);
    std::vector<T> out(space_shape(space.id()).empty()
                           ? 1
                           : std::size_t(shape_count(space_shape(space.id()))));
    if (H5Dread(dset.id(), mem_type, H5S_ALL, H5S_ALL, H5P_DEFAULT, out.data()) < 0)
        fail("cannot read dataset " + path);
    return out;
}

} // namespace

Handle& Handle::operator=(Handle&& other) noexcept {
    if (this != &other) {
        close();
        id_ = other.id_;
        kind_ = other.kind_;
        other.id_ = -1;
    }
    return *this;
}

void Handle::close() {
    if (id_ < 0) return;
    switch (kind_) {
        case Kind::file: H5Fclose(id_); break;
        case Kind::group: H5Gclose(id_); break;
        case Kind::dataset: H5Dclose(id_); break;
        case Kind::dataspace: H5Sclose(id_); break;
        case Kind::datatype: H5Tclose(id_); break;
        case Kind::attribute: H5Aclose(id_); break;
        case Kind::plist: H5Pclose(id_); break;
    }
    id_ = -1;
}

SilenceErrors::SilenceErrors() {
    H5Eget_auto2(H5E_DEFAULT, &old_func_, &old_data_);
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
}

SilenceErrors::~SilenceErrors() { H5Eset_auto2(H5E_DEFAULT, old_func_, old_data_); }

File::File(const std::string& path, Mode mode) {
    SilenceErrors quiet;
    hid_t id = mode == Mode::read
                   ? H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT)
                   : H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT);
    if (id < 0)
        fail((mode == Mode::read ? "cannot open " : "cannot create ") + path);
    file_ = Handle(id, Handle::Kind::file);
}

bool File::exists(const std::string& path) const {
    SilenceErrors quiet;
    // Every ancestor must exist, otherwise H5Lexists errors out.
    std::string cur;
    for (std::size_t i = 1; i <= path.size(); ++i) {
        if (i == path.size() || path[i] == '/') {
            if (H5Lexists(file_.id(), path.substr(0, i).c_str(), H5P_DEFAULT) <= 0) return false;
        }
    }
    return true;
}

std::vector<hsize_t> File::dataset_shape(const std::string& path) const {
    if (!exists(path)) fail("missing dataset " + path);
    Handle dset(H5Dopen2(file_.id(), path.c_str(), H5P_DEFAULT), Handle::Kind::dataset);
    if (!dset.valid()) fail("cannot open dataset " + path);
    Handle space(H5Dget_space(dset.id()), Handle::Kind::dataspace);
    return space_shape(space.id());
}

void File::write(const std::string& path, const std::vector<double>& data,
                 const std::vector<hsize_t>& shape) {
    write_dataset(file_.id(), path, data.data(), shape, H5T_NATIVE_DOUBLE, H5T_IEEE_F64LE);
}

void File::write_float(const std::string& path, const std::vector<float>& data,
                       const std::vector<hsize_t>& shape) {
    write_dataset(file_.id(), path, data.data(), shape, H5T_NATIVE_FLOAT, H5T_IEEE_F32LE);
}

void File::write(const std::string& path, const std::vector<std::int64_t>& data,
                 const std::vector<hsize_t>& shape) {
    write_dataset(file_.id(), path, data.data(), shape, H5T_NATIVE_INT64, H5T_STD_I64LE);
}

void File::write(const std::string& path, const std::string& text) {
    create_parent_groups(file_.id(), path);
    Handle type(H5Tcopy(H5T_C_S1), Handle::Kind::datatype);
    H5Tset_size(type.id(), std::max<std::size_t>(1, text.size()));
    Handle space(H5Screate(H5S_SCALAR), Handle::Kind::dataspace);
    Handle dset(H5Dcreate2(file_.id(), path.c_str(), type.id(), space.id(), H5P_DEFAULT,
                           H5P_DEFAULT, H5P_DEFAULT),
                Handle::Kind::dataset);
    if (!dset.valid()) fail("cannot create dataset " + path);
    if (H5Dwrite(dset.id(), type.id(), H5S_ALL, H5S_ALL, H5P_DEFAULT, text.c_str()) < 0)
        fail("cannot write dataset " + path);
}

std::vector<double> File::read_double(const std::string& path) const {
    return read_dataset<double>(file_.id(), path, H5T_NATIVE_DOUBLE);
}

std::vector<float> File::read_float(const std::string& path) const {
    return read_dataset<float>(file_.id(), path, H5T_NATIVE_FLOAT);
}

std::vector<std::int64_t> File::read_int(const std::string& path) const {
    return read_dataset<std::int64_t>(file_.id(), path, H5T_NATIVE_INT64);
}

std::string File::read_string(const std::string& path) const {
    if (!exists(path)) fail("missing dataset " + path);
    Handle dset(H5Dopen2(file_.id(), path.c_str(), H5P_DEFAULT), Handle::Kind::dataset);
    Handle type(H5Dget_type(dset.id()), Handle::Kind::datatype);
    if (H5Tget_class(type.id()) != H5T_STRING) fail(path + " is not a string dataset");
    if (H5Tis_variable_str(type.id())) {
        char* ptr = nullptr;
        Handle mem(H5Tcopy(H5T_C_S1), Handle::Kind::datatype);
        H5Tset_size(mem.id(), H5T_VARIABLE);
        if (H5Dread(dset.id(), mem.id(), H5S_ALL, H5S_ALL, H5P_DEFAULT, &ptr) < 0)
            fail("cannot read string " + path);
        std::string out = ptr ? ptr : "";
        H5free_memory(ptr);
        return out;
    }
    std::vector<char> buf(H5Tget_size(type.id()) + 1, '\0');
    if (H5Dread(dset.id(), type.id(), H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data()) < 0)
        fail("cannot read string " + path);
    return std::string(buf.data());
}

std::vector<std::complex<double>> File::read_complex(const std::string& path,
                                                     std::vector<hsize_t>& shape) const {
    if (!exists(path)) fail("missing dataset " + path);
    Handle dset(H5Dopen2(file_.id(), path.c_str(), H5P_DEFAULT), Handle::Kind::dataset);
    Handle type(H5Dget_type(dset.id()), Handle::Kind::datatype);
    Handle space(H5Dget_space(dset.id()), Handle::Kind::dataspace);
    std::vector<hsize_t> raw_shape = space_shape(space.id());

    if (H5Tget_class(type.id()) == H5T_COMPOUND) {
        if (H5Tget_nmembers(type.id()) != 2)
            fail(path + ": compound complex type must have exactly 2 members");
        struct CDouble {
            double re, im;
        };
        Handle mem(H5Tcreate(H5T_COMPOUND, sizeof(CDouble)), Handle::Kind::datatype);
        char* n0 = H5Tget_member_name(type.id(), 0);
        char* n1 = H5Tget_member_name(type.id(), 1);
        H5Tinsert(mem.id(), n0, HOFFSET(CDouble, re), H5T_NATIVE_DOUBLE);
        H5Tinsert(mem.id(), n1, HOFFSET(CDouble, im), H5T_NATIVE_DOUBLE);
        H5free_memory(n0);
        H5free_memory(n1);
        std::vector<CDouble> buf(std::size_t(shape_count(raw_shape)));
        if (H5Dread(dset.id(), mem.id(), H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data()) < 0)
            fail("cannot read compound complex dataset " + path);
        shape = raw_shape;
        std::vector<std::complex<double>> out(buf.size());
        for (std::size_t i = 0; i < buf.size(); ++i) out[i] = {buf[i].re, buf[i].im};
        return out;
    }

    if (raw_shape.empty() || raw_shape.back() != 2)
        fail(path + ": expected a trailing dimension of size 2 for complex data");
    std::vector<double> buf = read_dataset<double>(file_.id(), path, H5T_NATIVE_DOUBLE);
    shape.assign(raw_shape.begin(), raw_shape.end() - 1);
    std::vector<std::complex<double>> out(buf.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {buf[2 * i], buf[2 * i + 1]};
    return out;
}

void File::set_attr(const std::string& obj_path, const std::string& name,
                    const std::string& value) {
    ensure_group(obj_path);
    Handle type(H5Tcopy(H5T_C_S1), Handle::Kind::datatype);
    H5Tset_size(type.id(), std::max<std::size_t>(1, value.size()));
    Handle space(H5Screate(H5S_SCALAR), Handle::Kind::dataspace);
    if (H5Aexists_by_name(file_.id(), obj_path.c_str(), name.c_str(), H5P_DEFAULT) > 0)
        H5Adelete_by_name(file_.id(), obj_path.c_str(), name.c_str(), H5P_DEFAULT);
    Handle attr(H5Acreate_by_name(file_.id(), obj_path.c_str(), name.c_str(), type.id(),
                                  space.id(), H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT),
                Handle::Kind::attribute);
    if (!attr.valid()) fail("cannot create attribute " + obj_path + "@" + name);
    if (H5Awrite(attr.id(), type.id(), value.c_str()) < 0)
        fail("cannot write attribute " + obj_path + "@" + name);
}

std::string File::get_attr(const std::string& obj_path, const std::string& name) const {
    Handle attr(H5Aopen_by_name(file_.id(), obj_path.c_str(), name.c_str(), H5P_DEFAULT,
                                H5P_DEFAULT),
                Handle::Kind::attribute);
    if (!attr.valid()) fail("missing attribute " + obj_path + "@" + name);
    Handle type(H5Aget_type(attr.id()), Handle::Kind::datatype);
    std::vector<char> buf(H5Tget_size(type.id()) + 1, '\0');
    if (H5Aread(attr.id(), type.id(), buf.data()) < 0)
        fail("cannot read attribute " + obj_path + "@" + name);
    return std::string(buf.data());
}

std::vector<std::string> File::list_attrs(const std::string& obj_path) const {
    Handle obj(H5Oopen(file_.id(), obj_path.c_str(), H5P_DEFAULT), Handle::Kind::group);
    if (!obj.valid()) fail("cannot open object " + obj_path);
    H5O_info_t info;
#if H5_VERSION_GE(1, 12, 0)
    H5Oget_info3(obj.id(), &info, H5O_INFO_NUM_ATTRS);
#else
    H5Oget_info(obj.id(), &info);
#endif
    std::vector<std::string> names;
    for (hsize_t i = 0; i < info.num_attrs; ++i) {
        char buf[256];
        ssize_t len = H5Aget_name_by_idx(file_.id(), obj_path.c_str(), H5_INDEX_NAME,
                                         H5_ITER_INC, i, buf, sizeof(buf), H5P_DEFAULT);
        if (len > 0) names.emplace_back(buf, std::size_t(len));
    }
    return names;
}

void File::ensure_group(const std::string& path) {
    if (path == "/" || path.empty()) return;
    create_parent_groups(file_.id(), path + "/x");
}

} // namespace smr::h5
