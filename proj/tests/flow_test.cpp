#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "flowtrack/flow.hpp"
#include "flowtrack/rng.hpp"
#include "oracles.hpp"

using namespace flowtrack;

namespace {

// Wide textured canvas sampled at a horizontal offset, so shifted frame
// pairs share exact (or linearly interpolated) content.
Tensor canvas_frame(const Tensor& canvas, double x_off, int h, int w) {
    Tensor f(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double u = x + x_off;
            int u0 = static_cast<int>(std::floor(u));
            double fu = u - u0;
            f.at(y, x, 0) = static_cast<float>((1.0 - fu) * canvas.at(y, u0, 0) +
                                               fu * canvas.at(y, std::min(u0 + 1, canvas.w - 1), 0));
        }
    return f;
}

Tensor noise_canvas(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor c(h, w, 1);
    for (float& v : c.data) v = rng.uniform_f(0.0f, 255.0f);
    return c;
}

}  // namespace

TEST(EstimateFlow, IdenticalFramesGiveExactZeroField) {
    Tensor frame = noise_canvas(48, 64, 9);
    FlowField f = estimate_flow(frame, frame, FlowParams{});
    for (float v : f.uv) EXPECT_EQ(v, 0.0f);
}

TEST(EstimateFlow, IntegerShiftRecoveredExactlyInInterior) {
    const int h = 48, w = 64, shift = 3;
    Tensor canvas = noise_canvas(h, w + 8, 21);
    Tensor prev = canvas_frame(canvas, shift, h, w);
    Tensor cur = canvas_frame(canvas, 0, h, w);  // cur(x + shift) == prev(x)
    FlowField f = estimate_flow(prev, cur, FlowParams{});
    // interior: stay clear of the border blocks where content wraps away
    for (int y = 8; y < h - 8; ++y)
        for (int x = 8; x < w - 8 - shift; ++x) {
            EXPECT_EQ(f.u(y, x), static_cast<float>(shift)) << y << "," << x;
            EXPECT_EQ(f.v(y, x), 0.0f);
        }
}

TEST(EstimateFlow, LargerShiftViaPyramid) {
    // 10 px exceeds one level's +/-4 search but not the pyramid aggregate.
    // Shifts beyond one level's radius are recoverable only where the
    // coarsest level still sees the displaced content, so the interior
    // excludes a trailing band of block_size * 2^(levels-1) + shift.
    const int h = 64, w = 96, shift = 10;
    Tensor canvas = noise_canvas(h, w + 16, 33);
    Tensor prev = canvas_frame(canvas, shift, h, w);
    Tensor cur = canvas_frame(canvas, 0, h, w);
    FlowParams params;
    FlowField f = estimate_flow(prev, cur, params);
    const int trailing = params.block_size * (1 << (params.pyramid_levels - 1)) + shift;
    int good = 0, total = 0;
    for (int y = 8; y < h - 8; ++y)
        for (int x = 8; x < w - trailing; ++x) {
            ++total;
            if (f.u(y, x) == static_cast<float>(shift) && f.v(y, x) == 0.0f) ++good;
        }
    EXPECT_GT(total, 1000);
    EXPECT_EQ(good, total);
}

TEST(EstimateFlow, SubpixelShiftWithinHalfPixel) {
    const int h = 48, w = 64;
    const double shift = 1.5;
    Tensor canvas = noise_canvas(h, w + 8, 55);
    Tensor prev = canvas_frame(canvas, shift, h, w);
    Tensor cur = canvas_frame(canvas, 0, h, w);
    FlowParams p;
    p.subpixel_refine = true;
    FlowField f = estimate_flow(prev, cur, p);
    for (int y = 12; y < h - 12; ++y)
        for (int x = 12; x < w - 12; ++x) {
            EXPECT_NEAR(f.u(y, x), shift, 0.5);
            EXPECT_NEAR(f.v(y, x), 0.0, 0.5);
        }
}

TEST(EstimateFlow, VectorsBoundedByAggregateRange) {
    Rng rng(8);
    Tensor a = noise_canvas(40, 56, 1);
    Tensor b = noise_canvas(40, 56, 2);  // unrelated frames: worst case search
    FlowParams p;
    FlowField f = estimate_flow(a, b, p);
    double bound = p.aggregate_range();
    for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x) {
            EXPECT_LE(std::fabs(f.u(y, x)), bound);
            EXPECT_LE(std::fabs(f.v(y, x)), bound);
        }
}

TEST(EstimateFlow, MismatchedDimsThrow) {
    Tensor a(32, 32, 1, 0.0f), b(32, 40, 1, 0.0f);
    EXPECT_THROW(estimate_flow(a, b, FlowParams{}), ShapeError);
}

TEST(EstimateFlow, FrameSmallerThanBlockThrows) {
    Tensor a(4, 4, 1, 0.0f);
    EXPECT_THROW(estimate_flow(a, a, FlowParams{}), ShapeError);
}

TEST(FlowOffsetForBox, UniformFieldReturnsItsVector) {
    FlowField f(20, 20);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            f.u(y, x) = 2.0f;
            f.v(y, x) = 1.0f;
        }
    auto [dx, dy] = flow_offset_for_box(f, Box{10, 10, 6, 6});
    EXPECT_DOUBLE_EQ(dx, 2.0);
    EXPECT_DOUBLE_EQ(dy, 1.0);
}

TEST(FlowOffsetForBox, ZeroFieldReturnsZero) {
    FlowField f(16, 16);
    auto [dx, dy] = flow_offset_for_box(f, Box{8, 8, 5, 5});
    EXPECT_DOUBLE_EQ(dx, 0.0);
    EXPECT_DOUBLE_EQ(dy, 0.0);
}

TEST(FlowOffsetForBox, MedianMatchesSortedListOracle) {
    FlowField f(12, 12);
    // left half zeros, right half (4, 0) inside the box
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) f.u(y, x) = x >= 6 ? 4.0f : 0.0f;
    Box box{6.0, 6.0, 8.0, 8.0};
    auto [dx, dy] = flow_offset_for_box(f, box);

    std::vector<float> us;
    for (int y = 2; y <= 9; ++y)
        for (int x = 2; x <= 9; ++x) us.push_back(f.u(y, x));
    EXPECT_DOUBLE_EQ(dx, oracle::median_ref(us));
    EXPECT_DOUBLE_EQ(dy, 0.0);
}

TEST(FlowOffsetForBox, IgnoresVectorsOutsideBox) {
    FlowField f(20, 20);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) f.u(y, x) = (x < 4 || x > 15) ? 50.0f : 1.0f;
    auto [dx, dy] = flow_offset_for_box(f, Box{10, 10, 5, 5});
    EXPECT_DOUBLE_EQ(dx, 1.0);
    EXPECT_DOUBLE_EQ(dy, 0.0);
}

TEST(FlowOffsetForBox, BoxOutsideImageThrows) {
    FlowField f(16, 16);
    EXPECT_THROW(flow_offset_for_box(f, Box{40, 40, 4, 4}), GeometryError);
}

TEST(PropagateBox, ZeroOffsetIsIdentity) {
    Box b{10, 10, 4, 4};
    Box out = propagate_box(b, 0.0, 0.0);
    EXPECT_DOUBLE_EQ(out.x, 10.0);
    EXPECT_DOUBLE_EQ(out.y, 10.0);
}

TEST(PropagateBox, TranslatesCenterOnly) {
    Box out = propagate_box(Box{10, 10, 4, 4}, 3.0, -2.0);
    EXPECT_DOUBLE_EQ(out.x, 13.0);
    EXPECT_DOUBLE_EQ(out.y, 8.0);
    EXPECT_DOUBLE_EQ(out.w, 4.0);
    EXPECT_DOUBLE_EQ(out.h, 4.0);
}

TEST(PropagateBox, OffsetsCompose) {
    Rng rng(77);
    for (int i = 0; i < 50; ++i) {
        Box b = oracle::random_box(rng);
        double o1x = rng.uniform(-5, 5), o1y = rng.uniform(-5, 5);
        double o2x = rng.uniform(-5, 5), o2y = rng.uniform(-5, 5);
        Box two = propagate_box(propagate_box(b, o1x, o1y), o2x, o2y);
        Box one = propagate_box(b, o1x + o2x, o1y + o2y);
        EXPECT_NEAR(two.x, one.x, 1e-12);
        EXPECT_NEAR(two.y, one.y, 1e-12);
    }
}

TEST(FlowDump, RoundTripsThroughFtfl) {
    Rng rng(13);
    FlowField f(6, 9);
    for (float& v : f.uv) v = rng.uniform_f(-8.0f, 8.0f);
    std::ostringstream os(std::ios::binary);
    write_flow(os, f);
    std::istringstream is(os.str(), std::ios::binary);
    FlowField g = read_flow(is);
    EXPECT_EQ(g.h, f.h);
    EXPECT_EQ(g.w, f.w);
    EXPECT_EQ(g.uv, f.uv);
}

TEST(FlowDump, BadMagicThrows) {
    std::istringstream is(std::string("XXXX\x01\x00\x00\x00\x01\x00\x00\x00", 12), std::ios::binary);
    EXPECT_THROW(read_flow(is), DataIntegrityError);
}
