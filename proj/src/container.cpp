#include "smr/container.hpp"

#include "smr/errors.hpp"
#include "smr/hdf5_file.hpp"

namespace smr {

namespace {

const char* kAxisOrder = "x-fastest-row-major";

void write_meta(h5::File& f, const std::map<std::string, std::string>& meta) {
    f.ensure_group("/meta");
    f.set_attr("/meta", "axis_order", kAxisOrder);
    for (const auto& [key, value] : meta) f.set_attr("/meta", key, value);
}

std::map<std::string, std::string> read_meta(const h5::File& f) {
    std::map<std::string, std::string> meta;
    if (!f.exists("/meta")) return meta;
    for (const std::string& name : f.list_attrs("/meta")) {
        if (name == "axis_order") continue;
        meta[name] = f.get_attr("/meta", name);
    }
    return meta;
}

} // namespace

void save_system_matrix(const std::string& path, const SystemMatrix& sm) {
    sm.validate();
    h5::File f(path, h5::File::Mode::truncate);

    const Dims3 d = sm.dims();
    const std::size_t k = sm.component_count();
    const std::size_t n = std::size_t(d.product());
    std::vector<float> data(k * n * 2);
    for (std::size_t c = 0; c < k; ++c) {
        const auto& vol = sm.components[c].data;
        float* dst = data.data() + c * n * 2;
        for (std::size_t i = 0; i < n; ++i) {
            dst[2 * i] = float(vol[i].real());
            dst[2 * i + 1] = float(vol[i].imag());
        }
    }
    f.write_float("/systemmatrix/data", data,
                  {hsize_t(k), hsize_t(d.z), hsize_t(d.y), hsize_t(d.x), 2});
    f.write("/systemmatrix/frequencies", sm.frequencies, {hsize_t(k)});
    f.write("/systemmatrix/snr", sm.snr, {hsize_t(k)});
    f.write("/systemmatrix/dims", std::vector<std::int64_t>{d.x, d.y, d.z}, {3});
    if (!sm.components.empty() && sm.components.front().voxel_spacing) {
        const auto& sp = *sm.components.front().voxel_spacing;
        f.write("/systemmatrix/spacing", std::vector<double>{sp[0], sp[1], sp[2]}, {3});
    }
    write_meta(f, sm.meta);
}

SystemMatrix load_system_matrix(const std::string& path) {
    h5::File f(path, h5::File::Mode::read);
    for (const char* ds : {"/systemmatrix/data", "/systemmatrix/frequencies",
                           "/systemmatrix/snr", "/systemmatrix/dims"})
        if (!f.exists(ds)) throw DataError(path + ": missing dataset " + ds);

    auto dims_raw = f.read_int("/systemmatrix/dims");
    if (dims_raw.size() != 3) throw DataError(path + ": /systemmatrix/dims must have 3 entries");
    const Dims3 d{int(dims_raw[0]), int(dims_raw[1]), int(dims_raw[2])};
    const std::size_t n = std::size_t(d.product());

    auto shape = f.dataset_shape("/systemmatrix/data");
    if (shape.size() != 5 || shape[4] != 2 || shape[1] != hsize_t(d.z) ||
        shape[2] != hsize_t(d.y) || shape[3] != hsize_t(d.x))
        throw DataError(path + ": /systemmatrix/data shape does not match dims");
    const std::size_t k = shape[0];

    auto data = f.read_float("/systemmatrix/data");
    SystemMatrix sm;
    sm.frequencies = f.read_double("/systemmatrix/frequencies");
    sm.snr = f.read_double("/systemmatrix/snr");
    if (sm.frequencies.size() != k || sm.snr.size() != k)
        throw DataError(path + ": frequencies/snr length does not match data");

    std::optional<std::array<double, 3>> spacing;
    if (f.exists("/systemmatrix/spacing")) {
        auto sp = f.read_double("/systemmatrix/spacing");
        spacing = std::array<double, 3>{sp[0], sp[1], sp[2]};
    }

    sm.components.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        ComplexVolume vol = ComplexVolume::zeros(d);
        const float* src = data.data() + c * n * 2;
        for (std::size_t i = 0; i < n; ++i) vol.data[i] = cplx(src[2 * i], src[2 * i + 1]);
        vol.voxel_spacing = spacing;
        sm.components.push_back(std::move(vol));
    }
    sm.meta = read_meta(f);
    sm.validate();
    return sm;
}

void save_measurement(const std::string& path, const Measurement& m,
                      const std::map<std::string, std::string>& meta) {
    m.validate();
    h5::File f(path, h5::File::Mode::truncate);
    std::vector<double> data(m.u_hat.size() * 2);
    for (std::size_t i = 0; i < m.u_hat.size(); ++i) {
        data[2 * i] = m.u_hat[i].real();
        data[2 * i + 1] = m.u_hat[i].imag();
    }
    f.write("/measurement/data", data, {hsize_t(m.u_hat.size()), 2});
    f.write("/measurement/frequencies", m.frequencies, {hsize_t(m.frequencies.size())});
    write_meta(f, meta);
}

Measurement load_measurement(const std::string& path) {
    h5::File f(path, h5::File::Mode::read);
    for (const char* ds : {"/measurement/data", "/measurement/frequencies"})
        if (!f.exists(ds)) throw DataError(path + ": missing dataset " + ds);
    auto data = f.read_double("/measurement/data");
    Measurement m;
    m.frequencies = f.read_double("/measurement/frequencies");
    m.u_hat.resize(data.size() / 2);
    for (std::size_t i = 0; i < m.u_hat.size(); ++i) m.u_hat[i] = cplx(data[2 * i], data[2 * i + 1]);
    m.validate();
    return m;
}

void save_image(const std::string& path, const ConcentrationImage& img) {
    img.validate();
    h5::File f(path, h5::File::Mode::truncate);
    f.write("/image/values", img.values,
            {hsize_t(img.dims.z), hsize_t(img.dims.y), hsize_t(img.dims.x)});
    f.write("/image/dims", std::vector<std::int64_t>{img.dims.x, img.dims.y, img.dims.z}, {3});
    write_meta(f, img.meta);
}

ConcentrationImage load_image(const std::string& path) {
    h5::File f(path, h5::File::Mode::read);
    for (const char* ds : {"/image/values", "/image/dims"})
        if (!f.exists(ds)) throw DataError(path + ": missing dataset " + ds);
    auto dims_raw = f.read_int("/image/dims");
    ConcentrationImage img;
    img.dims = Dims3{int(dims_raw[0]), int(dims_raw[1]), int(dims_raw[2])};
    img.values = f.read_double("/image/values");
    img.meta = read_meta(f);
    img.validate();
    return img;
}

} // namespace smr
