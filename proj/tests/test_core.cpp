#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>

#include "driveby/blas.hpp"
#include "driveby/io.hpp"
#include "driveby/rng.hpp"
#include "driveby/tensor.hpp"
#include "driveby/threadpool.hpp"

using namespace driveby;

TEST_CASE("rng streams are deterministic and split-independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng c(42);
    Rng s1 = c.split("alpha");
    Rng s2 = c.split("beta");
    REQUIRE(s1.next_u64() != s2.next_u64());

    Rng d(42);
    Rng s1_again = d.split("alpha");
    Rng s1_fresh = Rng(42).split("alpha");
    REQUIRE(s1_fresh.next_u64() == s1_again.next_u64());
}

TEST_CASE("rng uniform and normal have sane moments") {
    Rng rng(7);
    double sum = 0, sum2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    REQUIRE(sum / n == Catch::Approx(0.5).margin(0.01));
    REQUIRE(sum2 / n - (sum / n) * (sum / n) == Catch::Approx(1.0 / 12).margin(0.01));

    sum = sum2 = 0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.normal();
        sum += g;
        sum2 += g * g;
    }
    REQUIRE(sum / n == Catch::Approx(0.0).margin(0.02));
    REQUIRE(sum2 / n == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("rng uniform_index covers the range") {
    Rng rng(3);
    std::vector<int> hits(10, 0);
    for (int i = 0; i < 10000; ++i) hits[rng.uniform_index(10)]++;
    for (int h : hits) REQUIRE(h > 800);
}

TEST_CASE("tensor shape bookkeeping") {
    nn::TensorF t({2, 3, 4});
    REQUIRE(t.numel() == 24);
    t.at(1, 2, 3) = 5.0f;
    REQUIRE(t[23] == 5.0f);
    REQUIRE(t.all_finite());
    t[0] = std::numeric_limits<float>::infinity();
    REQUIRE_FALSE(t.all_finite());
    REQUIRE_THROWS_AS(nn::check_shape(t, {2, 3, 5}, "test"), DataError);
}

static void naive_gemm(bool ta, bool tb, int m, int n, int k, const double* A, const double* B,
                       double* C) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) {
                const double a = ta ? A[p * m + i] : A[i * k + p];
                const double b = tb ? B[j * k + p] : B[p * n + j];
                s += a * b;
            }
            C[i * n + j] = s;
        }
}

TEST_CASE("gemm matches the naive triple loop for all transpose modes") {
    Rng rng(11);
    for (bool ta : {false, true})
        for (bool tb : {false, true}) {
            const int m = 7, n = 5, k = 9;
            std::vector<double> A(m * k), B(k * n), C(m * n, 0.0), ref(m * n, 0.0);
            for (auto& v : A) v = rng.uniform(-1, 1);
            for (auto& v : B) v = rng.uniform(-1, 1);
            nn::gemm<double>(ta, tb, m, n, k, 1.0, A.data(), B.data(), 0.0, C.data());
            naive_gemm(ta, tb, m, n, k, A.data(), B.data(), ref.data());
            for (int i = 0; i < m * n; ++i) REQUIRE(C[i] == Catch::Approx(ref[i]).epsilon(1e-12));

            std::vector<float> Af(A.begin(), A.end()), Bf(B.begin(), B.end()), Cf(m * n, 0.0f);
            nn::gemm<float>(ta, tb, m, n, k, 1.0f, Af.data(), Bf.data(), 0.0f, Cf.data());
            for (int i = 0; i < m * n; ++i) REQUIRE(Cf[i] == Catch::Approx(ref[i]).margin(1e-5));
        }
}

TEST_CASE("gemm beta accumulates") {
    std::vector<double> A = {1, 2, 3, 4}, B = {1, 0, 0, 1}, C = {10, 20, 30, 40};
    nn::gemm<double>(false, false, 2, 2, 2, 1.0, A.data(), B.data(), 1.0, C.data());
    REQUIRE(C[0] == 11.0);
    REQUIRE(C[3] == 44.0);
}

TEST_CASE("binary io round-trips and commits atomically") {
    const std::string path = "io_test.bin";
    {
        io::BinWriter w(path);
        w.magic("TST1");
        w.u16(1);
        w.u32(123456);
        w.u64(0xdeadbeefcafebabeULL);
        w.f32(1.5f);
        w.str("hello");
        REQUIRE_FALSE(std::filesystem::exists(path));  // only the temp exists pre-commit
        w.commit();
    }
    REQUIRE(std::filesystem::exists(path));
    {
        io::BinReader r(path);
        r.expect_magic("TST1");
        r.expect_version(1);
        REQUIRE(r.u32() == 123456);
        REQUIRE(r.u64() == 0xdeadbeefcafebabeULL);
        REQUIRE(r.f32() == 1.5f);
        REQUIRE(r.str() == "hello");
    }
    {
        io::BinReader r(path);
        REQUIRE_THROWS_AS(r.expect_magic("XXXX"), DataError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("truncated files raise DataError") {
    const std::string path = "io_trunc.bin";
    {
        io::BinWriter w(path);
        w.magic("TST1");
        w.u16(1);
        w.commit();
    }
    io::BinReader r(path);
    r.expect_magic("TST1");
    r.expect_version(1);
    REQUIRE_THROWS_AS(r.u64(), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("parallel_for covers every index exactly once") {
    std::vector<std::atomic<int>> hits(1000);
    ThreadPool::global().parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) REQUIRE(h.load() == 1);
}

TEST_CASE("parallel_for propagates exceptions") {
    REQUIRE_THROWS_AS(ThreadPool::global().parallel_for(
                          64, [](std::size_t i) { if (i == 13) throw DataError("boom"); }),
                      DataError);
}
