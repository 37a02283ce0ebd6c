#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hipass/container.hpp"
#include "hipass/rng.hpp"

using namespace hipass;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = rng.normal();
    return t;
}

std::string serialise(const std::vector<NamedTensor>& records) {
    std::ostringstream os(std::ios::binary);
    write_container(os, records);
    return os.str();
}

std::vector<NamedTensor> parse(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return read_container(is);
}

}  // namespace

TEST_CASE("byte layout") {
    const std::string bytes = serialise({{"ab", Tensor({2}, std::vector<double>{1.0, -2.0}), DType::f64}});
    // magic, count, name length, name, dtype, rank, one extent, 2 doubles
    CHECK(bytes.size() == 5 + 4 + 4 + 2 + 1 + 4 + 4 + 16);
    CHECK(bytes.substr(0, 5) == "VTEN1");
    CHECK(bytes[5] == 1);
    CHECK(bytes.substr(13, 2) == "ab");
    CHECK(bytes[15] == 1);
    double first;
    std::memcpy(&first, bytes.data() + 24, 8);
    CHECK(first == 1.0);
}

TEST_CASE("round trips") {
    const Tensor a = random_tensor({2, 3, 4}, 1), b = random_tensor({5}, 2);
    const auto back = parse(serialise({{"a", a, DType::f64}, {"ünïcode/b", b, DType::f32}}));
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "a");
    CHECK(back[0].tensor == a);
    CHECK(back[1].name == "ünïcode/b");
    CHECK(back[1].dtype == DType::f32);
    for (std::size_t i = 0; i < 5; ++i) CHECK(back[1].tensor[i] == double(float(b[i])));
    CHECK(parse(serialise({})).empty());
    CHECK(find_record(back, "a") == a);
    CHECK(find_record_or_null(back, "zzz") == nullptr);
    CHECK_THROWS_AS(find_record(back, "zzz"), FormatError);
}

TEST_CASE("corrupt inputs") {
    const std::string good = serialise({{"x", random_tensor({3, 3}, 3), DType::f64}});
    std::string bad_magic = good;
    bad_magic[0] = 'W';
    CHECK_THROWS_AS(parse(bad_magic), FormatError);
    std::string bad_version = good;
    bad_version[4] = '2';
    CHECK_THROWS_WITH_AS(parse(bad_version), doctest::Contains("unsupported container version"), FormatError);
    CHECK_THROWS_AS(parse(good.substr(0, good.size() - 3)), FormatError);
    CHECK_THROWS_AS(parse(good.substr(0, 3)), FormatError);
    std::string bad_dtype = good;
    bad_dtype[14] = 7;
    CHECK_THROWS_AS(parse(bad_dtype), FormatError);
    CHECK_THROWS_AS(read_container(fs::path("/nonexistent/file.vten")), FormatError);
}

TEST_CASE("netpbm") {
    const fs::path dir = fs::temp_directory_path() / "hipass_test_pnm";
    fs::create_directories(dir);
    Tensor grey({1, 3, 4});
    for (std::size_t i = 0; i < grey.size(); ++i) grey[i] = double(i * 20) / 255.0;
    write_pnm(dir / "g.pgm", grey);
    CHECK(max_abs_diff(read_pnm(dir / "g.pgm"), grey) <= 1e-12);

    Tensor colour({3, 2, 2}, 0.5);
    colour.at(0, 0, 0) = 1.0;
    write_pnm(dir / "c.ppm", colour);
    const Tensor back = read_pnm(dir / "c.ppm");
    CHECK(back.shape() == Shape{3, 2, 2});
    CHECK(back.at(0, 0, 0) == 1.0);
    CHECK(std::abs(back.at(1, 1, 1) - 0.5) <= 0.5 / 255.0);

    {
        std::ofstream f(dir / "comment.pgm");
        f << "P2\n# made by hand\n2 1\n255\n0 255\n";
    }
    CHECK(read_pnm(dir / "comment.pgm") == Tensor({1, 1, 2}, std::vector<double>{0.0, 1.0}));
    {
        std::ofstream f(dir / "p5.pgm");
        f << "P5\n2 1\n255\n";
    }
    CHECK_THROWS_AS(read_pnm(dir / "p5.pgm"), FormatError);
    CHECK_THROWS_AS(write_pnm(dir / "bad.pgm", Tensor({2, 2, 2})), DimensionError);
    fs::remove_all(dir);
}
