#include <catch2/catch_amalgamated.hpp>

#include "convcrf/features.hpp"
#include "convcrf/kernels.hpp"
#include "test_helpers.hpp"

using namespace convcrf;
using testutil::rel_err;

TEST_CASE("spatial_features definition") {
    FeatureStack<float> fs = spatial_features<float>(2, 2, 2);
    int px = fs.index_of("pos_x"), py = fs.index_of("pos_y");
    REQUIRE(px >= 0);
    REQUIRE(py >= 0);
    // pos_x rows: (0,0),(1,1); pos_y rows: (0,1),(0,1)
    REQUIRE(fs.at(px, 0, 0, 0) == 0.0f);
    REQUIRE(fs.at(px, 0, 0, 1) == 0.0f);
    REQUIRE(fs.at(px, 0, 1, 0) == 1.0f);
    REQUIRE(fs.at(px, 0, 1, 1) == 1.0f);
    REQUIRE(fs.at(py, 0, 0, 0) == 0.0f);
    REQUIRE(fs.at(py, 0, 0, 1) == 1.0f);
    REQUIRE(fs.at(py, 0, 1, 0) == 0.0f);
    REQUIRE(fs.at(py, 0, 1, 1) == 1.0f);
    // identical across the batch
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y) {
            REQUIRE(fs.at(px, 0, x, y) == fs.at(px, 1, x, y));
            REQUIRE(fs.at(py, 0, x, y) == fs.at(py, 1, x, y));
        }
}

TEST_CASE("spatial_features verified by direct loop") {
    FeatureStack<float> fs = spatial_features<float>(1, 3, 5);
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 5; ++y) {
            REQUIRE(fs.at(0, 0, x, y) == static_cast<float>(x));
            REQUIRE(fs.at(1, 0, x, y) == static_cast<float>(y));
        }
}

TEST_CASE("color_features copies channels") {
    SECTION("explicit values") {
        Tensor<float> img(1, 3, 1, 2);
        img.data = {10, 20, 30, 40, 50, 60};
        FeatureStack<float> fs = color_features(img);
        REQUIRE(fs.at(fs.index_of("r"), 0, 0, 0) == 10.0f);
        REQUIRE(fs.at(fs.index_of("r"), 0, 0, 1) == 20.0f);
        REQUIRE(fs.at(fs.index_of("g"), 0, 0, 0) == 30.0f);
        REQUIRE(fs.at(fs.index_of("g"), 0, 0, 1) == 40.0f);
        REQUIRE(fs.at(fs.index_of("b"), 0, 0, 0) == 50.0f);
        REQUIRE(fs.at(fs.index_of("b"), 0, 0, 1) == 60.0f);
    }
    SECTION("constant image gives constant planes") {
        Tensor<float> img(1, 3, 3, 3);
        for (auto& v : img.data) v = 128.0f;
        FeatureStack<float> fs = color_features(img);
        for (int d = 0; d < 3; ++d)
            for (int x = 0; x < 3; ++x)
                for (int y = 0; y < 3; ++y) REQUIRE(fs.at(d, 0, x, y) == 128.0f);
    }
    SECTION("random image matches channel slices") {
        Rng rng(1);
        Tensor<float> img = testutil::random_tensor<float>(2, 3, 4, 4, rng, 0.0, 255.0);
        FeatureStack<float> fs = color_features(img);
        for (int ch = 0; ch < 3; ++ch)
            for (int b = 0; b < 2; ++b)
                for (int x = 0; x < 4; ++x)
                    for (int y = 0; y < 4; ++y)
                        REQUIRE(fs.at(ch, b, x, y) == img.at(b, ch, x, y));
    }
    SECTION("wrong channel count rejected") {
        Tensor<float> img(1, 4, 2, 2);
        REQUIRE_THROWS_AS(color_features(img), std::invalid_argument);
    }
}

TEST_CASE("kernel_matrix closed forms") {
    SECTION("constant features make every in-image entry 1") {
        FeatureStack<float> fs(1, 5, 5);
        fs.add_plane("f", std::vector<float>(25, 3.0f));
        KernelSpec spec{{"f"}, {1.0}, 1.0, true};
        KernelMatrix<float> km = kernel_matrix(fs, spec, 3);
        // interior pixel: all 9 offsets in-image
        for (int off = 0; off < 9; ++off)
            REQUIRE(km.values.at(0, off, 2, 2) == Catch::Approx(1.0));
        // corner pixel: out-of-image entries are exact 0
        REQUIRE(km.values.at(0, offset_index(3, -1, -1), 0, 0) == 0.0f);
    }
    SECTION("spatial kernel, theta=1, offset (1,0) gives exp(-1/2)") {
        FeatureStack<float> fs = spatial_features<float>(1, 6, 6);
        KernelSpec spec{{"pos_x", "pos_y"}, {1.0, 1.0}, 1.0, true};
        KernelMatrix<float> km = kernel_matrix(fs, spec, 3);
        for (int x = 1; x < 5; ++x)
            for (int y = 1; y < 5; ++y) {
                REQUIRE(km.values.at(0, offset_index(3, 1, 0), x, y) ==
                        Catch::Approx(std::exp(-0.5)).epsilon(1e-5));
                REQUIRE(km.values.at(0, center_offset(3), x, y) == Catch::Approx(1.0));
            }
    }
    SECTION("missing feature plane is a configuration error") {
        FeatureStack<float> fs(1, 2, 2);
        fs.add_plane("a", std::vector<float>(4, 0.0f));
        KernelSpec spec{{"nope"}, {1.0}, 1.0, true};
        REQUIRE_THROWS_AS(kernel_matrix(fs, spec, 3), ConfigError);
    }
    SECTION("non-positive theta rejected") {
        FeatureStack<float> fs(1, 2, 2);
        fs.add_plane("a", std::vector<float>(4, 0.0f));
        KernelSpec spec{{"a"}, {0.0}, 1.0, true};
        REQUIRE_THROWS_AS(kernel_matrix(fs, spec, 3), std::invalid_argument);
    }
}

TEST_CASE("kernel_matrix matches a scalar pairwise oracle") {
    Rng rng(42);
    FeatureStack<float> fs(1, 6, 6);
    std::vector<float> f1(36), f2(36);
    for (auto& v : f1) v = static_cast<float>(rng.uniform(0.0, 10.0));
    for (auto& v : f2) v = static_cast<float>(rng.uniform(0.0, 10.0));
    fs.add_plane("f1", f1);
    fs.add_plane("f2", f2);
    KernelSpec spec{{"f1", "f2"}, {2.0, 0.7}, 1.0, true};
    int k = 3, r = 1;
    KernelMatrix<float> km = kernel_matrix(fs, spec, k);
    for (int x = 0; x < 6; ++x)
        for (int y = 0; y < 6; ++y)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int nx = x + dx, ny = y + dy;
                    double expected = 0.0;
                    if (nx >= 0 && nx < 6 && ny >= 0 && ny < 6) {
                        double d1 = fs.at(0, 0, x, y) - fs.at(0, 0, nx, ny);
                        double d2 = fs.at(1, 0, x, y) - fs.at(1, 0, nx, ny);
                        expected = std::exp(-d1 * d1 / (2.0 * 2.0 * 2.0) -
                                            d2 * d2 / (2.0 * 0.7 * 0.7));
                    }
                    REQUIRE(rel_err(km.values.at(0, offset_index(k, dx, dy), x, y), expected) <
                            1e-5);
                }
}

TEST_CASE("kernel matrix pairwise symmetry") {
    Rng rng(5);
    Tensor<float> img = testutil::random_tensor<float>(1, 3, 6, 6, rng, 0.0, 255.0);
    FeatureStack<float> fs = merge_stacks(spatial_features<float>(1, 6, 6), color_features(img));
    KernelSpec spec{{"pos_x", "pos_y", "r", "g", "b"}, {3.0, 3.0, 13.0, 13.0, 13.0}, 1.0, true};
    int k = 5, r = 2;
    KernelMatrix<float> km = kernel_matrix(fs, spec, k);
    for (int x = 0; x < 6; ++x)
        for (int y = 0; y < 6; ++y)
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int nx = x + dx, ny = y + dy;
                    if (nx < 0 || nx >= 6 || ny < 0 || ny >= 6) continue;
                    float fwd = km.values.at(0, offset_index(k, dx, dy), x, y);
                    float rev = km.values.at(0, offset_index(k, -dx, -dy), nx, ny);
                    REQUIRE(std::abs(fwd - rev) < 1e-6);
                }
}

TEST_CASE("kernel entries grow monotonically with theta") {
    Rng rng(6);
    FeatureStack<float> fs(1, 5, 5);
    std::vector<float> f(25);
    for (auto& v : f) v = static_cast<float>(rng.uniform(0.0, 20.0));
    fs.add_plane("f", f);
    KernelMatrix<float> narrow = kernel_matrix(fs, {{"f"}, {1.0}, 1.0, true}, 3);
    KernelMatrix<float> wide = kernel_matrix(fs, {{"f"}, {4.0}, 1.0, true}, 3);
    for (std::int64_t i = 0; i < narrow.values.size(); ++i)
        REQUIRE(wide.values.data[i] >= narrow.values.data[i]);
}

TEST_CASE("kernel invariant under joint feature/theta scaling") {
    Rng rng(7);
    FeatureStack<float> fs(1, 5, 5), scaled(1, 5, 5);
    std::vector<float> f(25), fscaled(25);
    for (int i = 0; i < 25; ++i) {
        f[i] = static_cast<float>(rng.uniform(0.0, 10.0));
        fscaled[i] = 2.5f * f[i];
    }
    fs.add_plane("f", f);
    scaled.add_plane("f", fscaled);
    KernelMatrix<float> a = kernel_matrix(fs, {{"f"}, {1.3}, 1.0, true}, 3);
    KernelMatrix<float> b = kernel_matrix(scaled, {{"f"}, {2.5 * 1.3}, 1.0, true}, 3);
    for (std::int64_t i = 0; i < a.values.size(); ++i)
        REQUIRE(std::abs(a.values.data[i] - b.values.data[i]) < 1e-6);
}

TEST_CASE("merge_kernels") {
    Rng rng(8);
    FeatureStack<float> fs = spatial_features<float>(1, 4, 4);
    KernelSpec spec{{"pos_x", "pos_y"}, {2.0, 2.0}, 1.0, true};
    KernelMatrix<float> km = kernel_matrix(fs, spec, 3);
    SECTION("single kernel with weight 1 is identity") {
        KernelMatrix<float> m = merge_kernels<float>({{1.0, &km}});
        REQUIRE(m.values.data == km.values.data);
    }
    SECTION("affine combination of equal kernels") {
        KernelMatrix<float> m = merge_kernels<float>({{0.3, &km}, {0.7, &km}});
        for (std::int64_t i = 0; i < m.values.size(); ++i)
            REQUIRE(rel_err(m.values.data[i], km.values.data[i]) < 1e-6);
    }
    SECTION("weighted sum of random kernels matches elementwise loop") {
        KernelMatrix<float> a(3, 1, 4, 4), b(3, 1, 4, 4), c(3, 1, 4, 4);
        a.values.fill_uniform(rng);
        b.values.fill_uniform(rng);
        c.values.fill_uniform(rng);
        double wa = rng.uniform(), wb = rng.uniform(), wc = rng.uniform();
        KernelMatrix<float> m = merge_kernels<float>({{wa, &a}, {wb, &b}, {wc, &c}});
        for (std::int64_t i = 0; i < m.values.size(); ++i)
            REQUIRE(rel_err(m.values.data[i], wa * a.values.data[i] + wb * b.values.data[i] +
                                                  wc * c.values.data[i]) < 1e-5);
    }
    SECTION("shape mismatch rejected") {
        KernelMatrix<float> other(3, 1, 5, 5);
        REQUIRE_THROWS_AS(merge_kernels<float>({{1.0, &km}, {1.0, &other}}),
                          std::invalid_argument);
    }
}

TEST_CASE("exclude_center") {
    SECTION("k=1 kernel becomes all zero") {
        KernelMatrix<float> km(1, 1, 3, 3);
        for (auto& v : km.values.data) v = 1.0f;
        KernelMatrix<float> out = exclude_center(km);
        for (float v : out.values.data) REQUIRE(v == 0.0f);
    }
    SECTION("constant-1 kernel keeps 8 neighbor planes") {
        KernelMatrix<float> km(3, 1, 3, 3);
        for (auto& v : km.values.data) v = 1.0f;
        KernelMatrix<float> out = exclude_center(km);
        for (int off = 0; off < 9; ++off)
            for (int x = 0; x < 3; ++x)
                for (int y = 0; y < 3; ++y)
                    REQUIRE(out.values.at(0, off, x, y) ==
                            (off == center_offset(3) ? 0.0f : 1.0f));
    }
    SECTION("only the center plane changes") {
        Rng rng(9);
        KernelMatrix<float> km(5, 2, 4, 4);
        km.values.fill_uniform(rng);
        KernelMatrix<float> out = exclude_center(km);
        for (int b = 0; b < 2; ++b)
            for (int off = 0; off < 25; ++off)
                for (int x = 0; x < 4; ++x)
                    for (int y = 0; y < 4; ++y)
                        REQUIRE(out.values.at(b, off, x, y) ==
                                (off == center_offset(5) ? 0.0f : km.values.at(b, off, x, y)));
    }
}
