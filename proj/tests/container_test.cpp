#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "smr/container.hpp"
#include "smr/errors.hpp"
#include "smr/hdf5_file.hpp"
#include "smr/mdf.hpp"

using namespace smr;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

struct Cleanup {
    std::filesystem::path p;
    ~Cleanup() { std::filesystem::remove(p); }
};

void write_scalar(h5::File& f, const std::string& path, std::int64_t v) {
    f.write(path, std::vector<std::int64_t>{v}, {1});
}

void write_scalar(h5::File& f, const std::string& path, double v) {
    f.write(path, std::vector<double>{v}, {1});
}

/// Minimal calibration file: 2x2x1 grid, one receive channel, three bins,
/// frames stored in grid order with no optional flags.
void write_plain_mdf(const std::string& path) {
    h5::File f(path, h5::File::Mode::truncate);
    const std::size_t frames = 4, channels = 1, freqs = 3;
    std::vector<float> data(frames * channels * freqs * 2);
    for (std::size_t fr = 0; fr < frames; ++fr)
        for (std::size_t k = 0; k < freqs; ++k) {
            data[(fr * freqs + k) * 2 + 0] = float(fr) + 0.125f * float(k);
            data[(fr * freqs + k) * 2 + 1] = -float(fr);
        }
    f.write_float("/measurement/data", data, {frames, channels, freqs, 2});
    write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(1));
    f.write("/calibration/size", std::vector<std::int64_t>{2, 2, 1}, {3});
    f.write("/calibration/snr", std::vector<double>{4.0, 5.0, 6.0}, {3});
    write_scalar(f, "/acquisition/receiver/numSamplingPoints", std::int64_t(4));
    write_scalar(f, "/acquisition/receiver/bandwidth", 10000.0);
}

/// Fixture exercising every optional mechanism at once: background frames,
/// a whole-file 1-based frame permutation, a meandering grid path, the
/// transposed on-disk orientation, two receive channels and a field of view.
void write_full_mdf(const std::string& path) {
    h5::File f(path, h5::File::Mode::truncate);
    const std::size_t frames = 6, channels = 2, freqs = 3;
    std::vector<double> data(freqs * channels * frames * 2);
    for (std::size_t k = 0; k < freqs; ++k)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t fr = 0; fr < frames; ++fr) {
                std::size_t at = ((k * channels + c) * frames + fr) * 2;
                data[at + 0] = 100.0 * double(c) + 10.0 * double(k) + double(fr);
                data[at + 1] = double(fr) - double(c);
            }
    f.write("/measurement/data", data, {freqs, channels, frames, 2});
    write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(1));
    write_scalar(f, "/measurement/isTransposed", std::int64_t(1));
    f.write("/measurement/isBackgroundFrame", std::vector<std::int64_t>{0, 1, 0, 0, 1, 0},
            {6});
    f.write("/measurement/framePermutation", std::vector<std::int64_t>{4, 1, 3, 6, 2, 5},
            {6});
    f.write("/calibration/size", std::vector<std::int64_t>{2, 2, 1}, {3});
    write_scalar(f, "/calibration/isMeanderingGrid", std::int64_t(1));
    std::vector<double> snr(channels * freqs);
    for (std::size_t i = 0; i < snr.size(); ++i) snr[i] = double(i) + 1.0;
    f.write("/calibration/snr", snr, {channels * freqs});
    f.write("/calibration/fieldOfView", std::vector<double>{0.04, 0.04, 0.02}, {3});
    write_scalar(f, "/acquisition/receiver/numSamplingPoints", std::int64_t(8));
    write_scalar(f, "/acquisition/receiver/bandwidth", 20000.0);
}

SystemMatrix sample_matrix() {
    SystemMatrix sm;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    for (int k = 0; k < 3; ++k) {
        ComplexVolume v = ComplexVolume::zeros(Dims3{3, 2, 2});
        for (auto& c : v.data) c = cplx(nd(rng), nd(rng));
        v.voxel_spacing = {{1.0, 1.5, 2.0}};
        sm.components.push_back(std::move(v));
        sm.frequencies.push_back(750.0 * (k + 1));
        sm.snr.push_back(2.0 * k + 1.0);
    }
    sm.meta["source_format"] = "simulated";
    sm.meta["seed"] = "8";
    return sm;
}

} // namespace

TEST_CASE("hdf5 wrapper round trips typed data and attributes") {
    auto path = temp_file("smr_h5_wrapper.h5");
    Cleanup guard{path};
    {
        h5::File f(path.string(), h5::File::Mode::truncate);
        f.write("/a/doubles", std::vector<double>{1.5, -2.5, 3.25}, {3});
        f.write("/a/ints", std::vector<std::int64_t>{7, -9}, {2});
        f.write("/a/text", std::string("hello"));
        f.write_float("/b/floats", std::vector<float>{0.5f, 1.5f}, {1, 2});
        f.ensure_group("/meta");
        f.set_attr("/meta", "alpha", "1");
        f.set_attr("/meta", "beta", "two");
    }
    h5::File f(path.string(), h5::File::Mode::read);
    CHECK(f.exists("/a/doubles"));
    CHECK(!f.exists("/a/missing"));
    CHECK(f.read_double("/a/doubles") == std::vector<double>{1.5, -2.5, 3.25});
    CHECK(f.read_int("/a/ints") == std::vector<std::int64_t>{7, -9});
    CHECK(f.read_string("/a/text") == "hello");
    CHECK(f.read_float("/b/floats") == std::vector<float>{0.5f, 1.5f});
    CHECK(f.dataset_shape("/b/floats") == std::vector<hsize_t>{1, 2});
    CHECK(f.get_attr("/meta", "alpha") == "1");
    std::vector<std::string> attrs = f.list_attrs("/meta");
    CHECK(attrs.size() == 2);
    CHECK_THROWS_AS(f.read_double("/a/missing"), DataError);
    CHECK_THROWS_AS(f.get_attr("/meta", "gamma"), DataError);
}

TEST_CASE("native system matrix container round trips") {
    auto path = temp_file("smr_container_sm.h5");
    Cleanup guard{path};
    SystemMatrix sm = sample_matrix();
    save_system_matrix(path.string(), sm);
    SystemMatrix r = load_system_matrix(path.string());

    REQUIRE(r.component_count() == 3);
    CHECK(r.dims() == Dims3{3, 2, 2});
    CHECK(r.frequencies == sm.frequencies);
    CHECK(r.snr == sm.snr);
    CHECK(r.meta.at("source_format") == "simulated");
    CHECK(r.meta.at("seed") == "8");
    REQUIRE(r.components[0].voxel_spacing.has_value());
    CHECK((*r.components[0].voxel_spacing)[1] == 1.5);

    // storage is float32: expect float precision, not exactness
    double peak = 0.0;
    for (const auto& c : sm.components) peak = std::max(peak, c.max_abs());
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < sm.components[k].data.size(); ++i)
            CHECK(std::abs(r.components[k].data[i] - sm.components[k].data[i]) <=
                  1e-6 * peak);
}

TEST_CASE("native measurement and image containers round trip exactly") {
    auto mpath = temp_file("smr_container_meas.h5");
    Cleanup mguard{mpath};
    Measurement m;
    m.u_hat = {cplx(1.25, -0.5), cplx(0.0, 2.0)};
    m.frequencies = {750.0, 1500.0};
    save_measurement(mpath.string(), m, {{"phantom", "shape"}});
    Measurement mr = load_measurement(mpath.string());
    CHECK(mr.u_hat == m.u_hat);
    CHECK(mr.frequencies == m.frequencies);

    auto ipath = temp_file("smr_container_img.h5");
    Cleanup iguard{ipath};
    ConcentrationImage img = ConcentrationImage::zeros(Dims3{2, 3, 2});
    for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = 0.25 * double(i);
    img.meta["label"] = "true";
    save_image(ipath.string(), img);
    ConcentrationImage ir = load_image(ipath.string());
    CHECK(ir.dims == img.dims);
    CHECK(ir.values == img.values);
    CHECK(ir.meta.at("label") == "true");
}

TEST_CASE("plain calibration ingest maps frames onto the grid in order") {
    auto path = temp_file("smr_mdf_plain.h5");
    Cleanup guard{path};
    write_plain_mdf(path.string());

    SystemMatrix sm = ingest_mdf_system_matrix(path.string());
    REQUIRE(sm.component_count() == 3);
    CHECK(sm.dims() == Dims3{2, 2, 1});
    CHECK(sm.snr == std::vector<double>{4.0, 5.0, 6.0});
    CHECK(sm.meta.at("source_format") == "mdf-v2");
    CHECK(sm.meta.at("receive_channels") == "1");

    // rFFT bin spacing: k * bandwidth / (J/2) with J = 4
    CHECK(sm.frequencies[0] == 0.0);
    CHECK(sm.frequencies[1] == doctest::Approx(5000.0).epsilon(1e-12));
    CHECK(sm.frequencies[2] == doctest::Approx(10000.0).epsilon(1e-12));

    for (std::size_t k = 0; k < 3; ++k)
        for (int fr = 0; fr < 4; ++fr) {
            cplx want(double(fr) + 0.125 * double(k), -double(fr));
            CHECK(sm.components[k].data[std::size_t(fr)] == want);
        }
}

TEST_CASE("full calibration ingest undoes permutation, background and meander") {
    auto path = temp_file("smr_mdf_full.h5");
    Cleanup guard{path};
    write_full_mdf(path.string());

    SystemMatrix sm = ingest_mdf_system_matrix(path.string());
    REQUIRE(sm.component_count() == 6); // 2 channels x 3 bins, channel-major
    CHECK(sm.dims() == Dims3{2, 2, 1});
    CHECK(sm.frequencies[0] == 0.0);
    CHECK(sm.frequencies[1] == doctest::Approx(5000.0).epsilon(1e-12)); // 20000 / 4
    CHECK(sm.frequencies[4] == doctest::Approx(5000.0).epsilon(1e-12)); // repeats per channel
    CHECK(sm.snr == std::vector<double>{1, 2, 3, 4, 5, 6});
    REQUIRE(sm.components[0].voxel_spacing.has_value());
    CHECK((*sm.components[0].voxel_spacing)[0] == doctest::Approx(0.02).epsilon(1e-12));

    // permutation {4,1,3,6,2,5} minus background frames {1,4} leaves stored
    // frames [3,0,2,5]; the meander path on a 2x2 plane visits (0,0) (1,0)
    // (1,1) (0,1), so grid (x,y) reads those frames in that slot order.
    struct Expect {
        int x, y;
        double frame;
    };
    for (Expect e : {Expect{0, 0, 3.0}, {1, 0, 0.0}, {1, 1, 2.0}, {0, 1, 5.0}}) {
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < 3; ++k) {
                cplx want(100.0 * double(c) + 10.0 * double(k) + e.frame,
                          e.frame - double(c));
                CHECK(sm.components[c * 3 + k].at(e.x, e.y, 0) == want);
            }
    }
}

TEST_CASE("measurement ingest averages the foreground frames") {
    auto path = temp_file("smr_mdf_meas.h5");
    Cleanup guard{path};
    {
        h5::File f(path.string(), h5::File::Mode::truncate);
        const std::size_t frames = 3, channels = 2, freqs = 2;
        std::vector<double> data(frames * channels * freqs * 2);
        for (std::size_t fr = 0; fr < frames; ++fr)
            for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t k = 0; k < freqs; ++k) {
                    std::size_t at = ((fr * channels + c) * freqs + k) * 2;
                    data[at + 0] = double(fr + c + k);
                    data[at + 1] = double(fr) * double(k);
                }
        f.write("/measurement/data", data, {frames, channels, freqs, 2});
        write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(1));
        f.write("/measurement/isBackgroundFrame", std::vector<std::int64_t>{0, 0, 1}, {3});
        write_scalar(f, "/acquisition/receiver/numSamplingPoints", std::int64_t(4));
        write_scalar(f, "/acquisition/receiver/bandwidth", 8.0);
    }

    Measurement m = ingest_mdf_measurement(path.string());
    REQUIRE(m.u_hat.size() == 4);
    CHECK(m.frequencies == std::vector<double>{0.0, 4.0, 0.0, 4.0});
    // mean over foreground frames 0 and 1
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 2; ++k) {
            cplx want(0.5 * (double(c + k) + double(1 + c + k)), 0.5 * (0.0 + double(k)));
            CHECK(std::abs(m.u_hat[c * 2 + k] - want) < 1e-12);
        }
}

TEST_CASE("calibration ingest rejects malformed files") {
    auto path = temp_file("smr_mdf_bad.h5");
    Cleanup guard{path};

    SUBCASE("time-domain data") {
        {
            h5::File f(path.string(), h5::File::Mode::truncate);
            f.write_float("/measurement/data", std::vector<float>(24, 0.0f), {4, 1, 3, 2});
            write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(0));
        }
        CHECK_THROWS_AS(ingest_mdf_system_matrix(path.string()), DataError);
    }

    SUBCASE("missing the fourier flag") {
        {
            h5::File f(path.string(), h5::File::Mode::truncate);
            f.write_float("/measurement/data", std::vector<float>(24, 0.0f), {4, 1, 3, 2});
        }
        CHECK_THROWS_AS(ingest_mdf_system_matrix(path.string()), DataError);
    }

    SUBCASE("wrong data rank") {
        {
            h5::File f(path.string(), h5::File::Mode::truncate);
            f.write_float("/measurement/data", std::vector<float>(24, 0.0f), {12, 2});
            write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(1));
        }
        CHECK_THROWS_AS(ingest_mdf_system_matrix(path.string()), DataError);
    }

    SUBCASE("frame count does not cover the grid") {
        {
            // the grid demands 8 frames but only 4 are stored
            h5::File f(path.string(), h5::File::Mode::truncate);
            std::vector<float> data(4 * 1 * 3 * 2, 1.0f);
            f.write_float("/measurement/data", data, {4, 1, 3, 2});
            write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(1));
            f.write("/calibration/size", std::vector<std::int64_t>{2, 2, 2}, {3});
            f.write("/calibration/snr", std::vector<double>{1, 1, 1}, {3});
            write_scalar(f, "/acquisition/receiver/numSamplingPoints", std::int64_t(4));
            write_scalar(f, "/acquisition/receiver/bandwidth", 10000.0);
        }
        CHECK_THROWS_AS(ingest_mdf_system_matrix(path.string()), DataError);
    }

    SUBCASE("permutation repeats a frame") {
        {
            h5::File f(path.string(), h5::File::Mode::truncate);
            std::vector<float> data(4 * 1 * 3 * 2, 1.0f);
            f.write_float("/measurement/data", data, {4, 1, 3, 2});
            write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(1));
            f.write("/measurement/framePermutation",
                    std::vector<std::int64_t>{1, 2, 2, 4}, {4});
            f.write("/calibration/size", std::vector<std::int64_t>{2, 2, 1}, {3});
            f.write("/calibration/snr", std::vector<double>{1, 1, 1}, {3});
            write_scalar(f, "/acquisition/receiver/numSamplingPoints", std::int64_t(4));
            write_scalar(f, "/acquisition/receiver/bandwidth", 10000.0);
        }
        CHECK_THROWS_AS(ingest_mdf_system_matrix(path.string()), DataError);
    }

    SUBCASE("permutation entry out of range") {
        {
            h5::File f(path.string(), h5::File::Mode::truncate);
            std::vector<float> data(4 * 1 * 3 * 2, 1.0f);
            f.write_float("/measurement/data", data, {4, 1, 3, 2});
            write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(1));
            f.write("/measurement/framePermutation",
                    std::vector<std::int64_t>{1, 2, 3, 5}, {4});
            f.write("/calibration/size", std::vector<std::int64_t>{2, 2, 1}, {3});
            f.write("/calibration/snr", std::vector<double>{1, 1, 1}, {3});
            write_scalar(f, "/acquisition/receiver/numSamplingPoints", std::int64_t(4));
            write_scalar(f, "/acquisition/receiver/bandwidth", 10000.0);
        }
        CHECK_THROWS_AS(ingest_mdf_system_matrix(path.string()), DataError);
    }

    SUBCASE("wrong snr length") {
        {
            h5::File f(path.string(), h5::File::Mode::truncate);
            std::vector<float> data(4 * 1 * 3 * 2, 1.0f);
            f.write_float("/measurement/data", data, {4, 1, 3, 2});
            write_scalar(f, "/measurement/isFourierTransformed", std::int64_t(1));
            f.write("/calibration/size", std::vector<std::int64_t>{2, 2, 1}, {3});
            f.write("/calibration/snr", std::vector<double>{1, 1}, {2});
            write_scalar(f, "/acquisition/receiver/numSamplingPoints", std::int64_t(4));
            write_scalar(f, "/acquisition/receiver/bandwidth", 10000.0);
        }
        CHECK_THROWS_AS(ingest_mdf_system_matrix(path.string()), DataError);
    }

    SUBCASE("not an hdf5 file at all") {
        std::ofstream(path) << "this is not hdf5";
        CHECK_THROWS_AS(ingest_mdf_system_matrix(path.string()), DataError);
    }
}
