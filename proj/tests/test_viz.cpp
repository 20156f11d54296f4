#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "sima/rng.hpp"
#include "sima/viz.hpp"

using namespace sima;

TEST_CASE("saliency: matches a straight two-pass oracle") {
    Rng rng(3);
    const Tensor m = rng.normal_tensor({16, 6});
    const SaliencyMap map = token_saliency(m, 4);
    REQUIRE(map.grid.rows() == 4);
    REQUIRE(map.grid.cols() == 4);

    // oracle: norms first, then min-max
    std::vector<double> norms(16);
    for (std::size_t t = 0; t < 16; ++t) {
        double s = 0;
        for (std::size_t j = 0; j < 6; ++j) s += m(t, j) * m(t, j);
        norms[t] = std::sqrt(s);
    }
    double lo = norms[0], hi = norms[0];
    for (double v : norms) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (std::size_t t = 0; t < 16; ++t)
        CHECK(std::abs(map.grid.data[t] - (norms[t] - lo) / (hi - lo)) < 1e-12);
    for (double v : map.grid.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("saliency: constant input normalizes to all zeros") {
    const Tensor m = Tensor::full({4, 3}, 2.5);
    const SaliencyMap map = token_saliency(m, 2);
    for (double v : map.grid.data) CHECK(v == 0.0);
}

TEST_CASE("saliency: single hot token becomes the single 1.0 cell") {
    Tensor m = Tensor::zeros({9, 4});
    m(5, 0) = 3.0;
    const SaliencyMap map = token_saliency(m, 3);
    for (std::size_t t = 0; t < 9; ++t) CHECK(map.grid.data[t] == (t == 5 ? 1.0 : 0.0));
}

TEST_CASE("saliency: token count must fill the grid") {
    CHECK_THROWS_AS(token_saliency(Tensor::zeros({5, 2}), 2), ShapeError);
}

TEST_CASE("pgm: round trip preserves quantized values") {
    Rng rng(4);
    SaliencyMap map = token_saliency(rng.normal_tensor({16, 3}), 4);
    const std::string path = "test_viz_rt.pgm";
    write_pgm(map, path);
    const Tensor back = read_pgm(path);
    std::remove(path.c_str());
    REQUIRE(back.rows() == 4);
    REQUIRE(back.cols() == 4);
    // one 8-bit quantization step of tolerance
    for (std::size_t i = 0; i < 16; ++i)
        CHECK(std::abs(back.data[i] - map.grid.data[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("pgm: nearest-neighbor upscale repeats each cell as a block") {
    SaliencyMap map;
    map.grid = Tensor::from_rows({{0.0, 1.0}, {1.0, 0.0}});
    const std::string path = "test_viz_up.pgm";
    write_pgm(map, path, 2);
    const Tensor img = read_pgm(path);
    std::remove(path.c_str());
    REQUIRE(img.rows() == 4);
    REQUIRE(img.cols() == 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(img(i, j) == map.grid(i / 2, j / 2));
}

TEST_CASE("pgm: a 1x1 map of value 1.0 writes pixel 255") {
    SaliencyMap map;
    map.grid = Tensor::full({1, 1}, 1.0);
    const std::string path = "test_viz_one.pgm";
    write_pgm(map, path);
    const Tensor img = read_pgm(path);
    std::remove(path.c_str());
    REQUIRE(img.size() == 1);
    CHECK(img.data[0] == 1.0);
}

TEST_CASE("pgm: reader rejects a non-P5 file") {
    const std::string path = "test_viz_bad.pgm";
    {
        std::ofstream f(path);
        f << "P2\n1 1\n255\n0\n";
    }
    CHECK_THROWS_AS(read_pgm(path), IoError);
    std::remove(path.c_str());
}
