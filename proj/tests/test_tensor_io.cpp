#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "ddk/random.hpp"
#include "ddk/tensor.hpp"

using namespace ddk;

TEST_CASE("tensor round-trip reproduces dims and payload exactly") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor t;
        const int rank = 1 + static_cast<int>(rng.uniform_index(4));
        for (int i = 0; i < rank; ++i) t.dims.push_back(1 + static_cast<std::uint32_t>(rng.uniform_index(6)));
        t.data.resize(t.element_count());
        for (float& f : t.data) f = static_cast<float>(rng.normal(0, 10));

        std::stringstream ss;
        write_tensor(ss, t);
        const Tensor back = read_tensor(ss, "roundtrip");
        CHECK(back.dims == t.dims);
        CHECK(back.data == t.data);
    }
}

TEST_CASE("tensor header layout is bit-exact") {
    Tensor t;
    t.dims = {2, 3};
    t.data = {0, 0, 0, 0, 0, 1.0f};
    std::stringstream ss;
    write_tensor(ss, t);
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() == 4 + 4 + 8 + 24);
    CHECK(bytes.substr(0, 4) == "DDK1");
    CHECK(static_cast<unsigned char>(bytes[4]) == 2);  // rank, little-endian
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);  // dims[0]
    CHECK(static_cast<unsigned char>(bytes[12]) == 3); // dims[1]
    // 1.0f little-endian = 00 00 80 3f
    CHECK(static_cast<unsigned char>(bytes[bytes.size() - 2]) == 0x80);
    CHECK(static_cast<unsigned char>(bytes[bytes.size() - 1]) == 0x3f);
}

TEST_CASE("malformed tensors raise errors naming the offending field") {
    SECTION("bad magic") {
        std::stringstream ss("XXXX");
        CHECK_THROWS_WITH(read_tensor(ss, "f"), Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("truncated dims") {
        std::stringstream ss;
        ss.write("DDK1", 4);
        detail::put_u32(ss, 2);
        detail::put_u32(ss, 5);
        CHECK_THROWS_WITH(read_tensor(ss, "f"), Catch::Matchers::ContainsSubstring("dims"));
    }
    SECTION("short payload") {
        std::stringstream ss;
        ss.write("DDK1", 4);
        detail::put_u32(ss, 1);
        detail::put_u32(ss, 4);
        detail::put_u32(ss, 0);  // only one of four floats
        CHECK_THROWS_WITH(read_tensor(ss, "f"), Catch::Matchers::ContainsSubstring("payload"));
    }
    SECTION("trailing bytes") {
        Tensor t;
        t.dims = {1};
        t.data = {2.0f};
        std::stringstream ss;
        write_tensor(ss, t);
        ss << "junk";
        CHECK_THROWS_WITH(read_tensor(ss, "f"), Catch::Matchers::ContainsSubstring("trailing"));
    }
}

TEST_CASE("feature map adapts rank-3 tensors and samples bilinearly") {
    FeatureMap m(2, 3, 1, 1.0);
    // Plane values: row 0: 0 1 2 / row 1: 3 4 5
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) m.at(0, y, x) = static_cast<float>(y * 3 + x);

    // At a cell center the sample is the cell value.
    CHECK_THAT(m.sample(0, 0.5, 0.5), Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(m.sample(0, 2.5, 1.5), Catch::Matchers::WithinAbs(5.0, 1e-12));
    // Midway between cell centers (1.0, 0.5-centered row): mean of 0 and 1.
    CHECK_THAT(m.sample(0, 1.0, 0.5), Catch::Matchers::WithinAbs(0.5, 1e-12));
    // Far outside reads zero.
    CHECK(m.sample(0, -5.0, -5.0) == 0.0);

    const Tensor t = m.to_tensor();
    REQUIRE(t.dims == std::vector<std::uint32_t>{1, 2, 3});
    const FeatureMap back = FeatureMap::from_tensor(t, 16.0);
    CHECK(back.data == m.data);
    CHECK(back.stride == 16.0);

    Tensor rank2;
    rank2.dims = {2, 3};
    rank2.data.assign(6, 0.f);
    CHECK_THROWS_WITH(FeatureMap::from_tensor(rank2, 16.0, "m"), Catch::Matchers::ContainsSubstring("rank 3"));
}
