#include <gtest/gtest.h>

#include "flowtrack/metrics.hpp"
#include "flowtrack/rng.hpp"
#include "oracles.hpp"

using namespace flowtrack;

namespace {

std::vector<GroundTruthEntry> constant_gt(int n, Box b = Box{50, 50, 20, 20}) {
    return std::vector<GroundTruthEntry>(n, GroundTruthEntry{b, false});
}

std::vector<FramePrediction> boxes_as_pred(const std::vector<Box>& boxes) {
    std::vector<FramePrediction> out(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i)
        out[i] = FramePrediction{true, boxes[i], TrackState::Active};
    return out;
}

}  // namespace

TEST(SuccessCurve, PerfectPredictionScoresOneEverywhere) {
    auto gt = constant_gt(10);
    std::vector<Box> pred(10, gt[0].box);
    SuccessCurve c = success_curve(pred, gt);
    ASSERT_EQ(c.values.size(), 19u);
    for (double v : c.values) EXPECT_DOUBLE_EQ(v, 1.0);
    EXPECT_DOUBLE_EQ(c.auc, 1.0);
    EXPECT_EQ(c.evaluated_frames, 10);
}

TEST(SuccessCurve, DisjointPredictionScoresZero) {
    auto gt = constant_gt(10);
    std::vector<Box> pred(10, Box{200, 200, 5, 5});
    SuccessCurve c = success_curve(pred, gt);
    for (double v : c.values) EXPECT_DOUBLE_EQ(v, 0.0);
    EXPECT_DOUBLE_EQ(c.auc, 0.0);
}

TEST(SuccessCurve, MixedIouCountsAtThreshold) {
    // vertical shift d on a 20x20 box gives IoU (20-d)/(20+d):
    // d = 5 -> 0.6, d = 40/3 -> 0.2; half at each -> success(0.5) = 0.5
    auto gt = constant_gt(10, Box{50, 50, 20, 20});
    std::vector<Box> pred;
    for (int i = 0; i < 5; ++i) pred.push_back(Box{50, 55, 20, 20});
    for (int i = 0; i < 5; ++i) pred.push_back(Box{50, 50 + 40.0 / 3.0, 20, 20});
    SuccessCurve c = success_curve(pred, gt);
    // thresholds are 0.05*k; success(0.5) is index 9
    EXPECT_DOUBLE_EQ(c.thresholds[9], 0.5);
    EXPECT_DOUBLE_EQ(c.values[9], 0.5);
}

TEST(SuccessCurve, MonotoneNonIncreasing) {
    Rng rng(42);
    auto gt = constant_gt(50);
    std::vector<Box> pred;
    for (int i = 0; i < 50; ++i)
        pred.push_back(Box{rng.uniform(30, 70), rng.uniform(30, 70), 20, 20});
    SuccessCurve c = success_curve(pred, gt);
    for (std::size_t i = 1; i < c.values.size(); ++i) EXPECT_LE(c.values[i], c.values[i - 1]);
    EXPECT_GE(c.auc, 0.0);
    EXPECT_LE(c.auc, 1.0);
}

TEST(SuccessCurve, OccludedReportedFramesAreExcluded) {
    auto gt = constant_gt(10);
    for (int t = 4; t <= 6; ++t) gt[t].occluded = true;
    std::vector<FramePrediction> pred(10);
    for (int t = 0; t < 10; ++t)
        pred[t] = FramePrediction{true, Box{200, 200, 4, 4},  // useless box
                                  t >= 4 && t <= 6 ? TrackState::Occluded : TrackState::Active};
    SuccessCurve c = success_curve(pred, gt);
    EXPECT_EQ(c.excluded_frames, 3);
    EXPECT_EQ(c.evaluated_frames, 7);
    // occluded gt frames where the tracker did NOT report occluded count
    pred[4].state = TrackState::Active;
    SuccessCurve c2 = success_curve(pred, gt);
    EXPECT_EQ(c2.excluded_frames, 2);
}

TEST(SuccessCurve, LengthMismatchThrows) {
    auto gt = constant_gt(5);
    std::vector<Box> pred(4, gt[0].box);
    EXPECT_THROW(success_curve(pred, gt), ValidationError);
}

TEST(RecallFailures, PerfectTrackingScoresRecallOneNoFailures) {
    auto gt = constant_gt(20);
    FrameRecords rec(20);
    for (int t = 0; t < 20; ++t)
        rec[t].push_back(TrackSnapshot{t, 1, TrackState::Active, gt[t].box, 0.9});
    RecallFailures rf = recall_and_failures(rec, gt);
    EXPECT_DOUBLE_EQ(rf.recall, 1.0);
    EXPECT_EQ(rf.failures, 0);
}

TEST(RecallFailures, NoEmissionsGiveZeroRecall) {
    auto gt = constant_gt(20);
    FrameRecords rec(20);
    RecallFailures rf = recall_and_failures(rec, gt);
    EXPECT_DOUBLE_EQ(rf.recall, 0.0);
    EXPECT_EQ(rf.failures, 1);  // the whole run is one violation episode
}

TEST(RecallFailures, SingleDivergenceEpisodeCountsOnce) {
    auto gt = constant_gt(30);
    FrameRecords rec(30);
    for (int t = 0; t < 30; ++t) {
        // frames 10..14 diverge far beyond 2x the gt diagonal, then recover
        Box b = (t >= 10 && t < 15) ? Box{400, 400, 20, 20} : gt[t].box;
        rec[t].push_back(TrackSnapshot{t, 1, TrackState::Active, b, 0.9});
    }
    RecallFailures rf = recall_and_failures(rec, gt);
    EXPECT_EQ(rf.failures, 1);
    EXPECT_NEAR(rf.recall, 25.0 / 30.0, 1e-12);
}

TEST(RecallFailures, TwoEpisodesCountTwice) {
    auto gt = constant_gt(30);
    FrameRecords rec(30);
    for (int t = 0; t < 30; ++t) {
        bool bad = (t >= 5 && t < 8) || (t >= 20 && t < 22);
        Box b = bad ? Box{400, 400, 20, 20} : gt[t].box;
        rec[t].push_back(TrackSnapshot{t, 1, TrackState::Active, b, 0.9});
    }
    EXPECT_EQ(recall_and_failures(rec, gt).failures, 2);
}

TEST(RecallFailures, OccludedGtFramesExcludedFromRecallDenominator) {
    auto gt = constant_gt(10);
    gt[3].occluded = gt[4].occluded = true;
    FrameRecords rec(10);
    for (int t = 0; t < 10; ++t)
        rec[t].push_back(TrackSnapshot{t, 1, TrackState::Active, gt[t].box, 0.9});
    RecallFailures rf = recall_and_failures(rec, gt);
    EXPECT_EQ(rf.visible_frames, 8);
    EXPECT_DOUBLE_EQ(rf.recall, 1.0);
}

TEST(PickPrimary, PrefersOldestActiveThenOccluded) {
    FrameRecords rec(1);
    rec[0].push_back(TrackSnapshot{0, 7, TrackState::Occluded, Box{1, 1, 2, 2}, 0.5});
    rec[0].push_back(TrackSnapshot{0, 3, TrackState::Active, Box{2, 2, 2, 2}, 0.4});
    rec[0].push_back(TrackSnapshot{0, 5, TrackState::Active, Box{3, 3, 2, 2}, 0.9});
    rec[0].push_back(TrackSnapshot{0, 1, TrackState::Tentative, Box{4, 4, 2, 2}, 0.9});
    auto pred = pick_primary(rec);
    ASSERT_TRUE(pred[0].has);
    EXPECT_DOUBLE_EQ(pred[0].box.x, 2.0);  // id 3, oldest Active

    FrameRecords rec2(1);
    rec2[0].push_back(TrackSnapshot{0, 9, TrackState::Occluded, Box{6, 6, 2, 2}, 0.5});
    rec2[0].push_back(TrackSnapshot{0, 2, TrackState::Tentative, Box{7, 7, 2, 2}, 0.5});
    auto pred2 = pick_primary(rec2);
    ASSERT_TRUE(pred2[0].has);
    EXPECT_EQ(pred2[0].state, TrackState::Occluded);

    FrameRecords rec3(1);
    rec3[0].push_back(TrackSnapshot{0, 2, TrackState::Tentative, Box{7, 7, 2, 2}, 0.5});
    EXPECT_FALSE(pick_primary(rec3)[0].has);
}

TEST(FpsReport, FortyMsIsTwentyFiveFps) {
    std::vector<StageTimings> ts(8);
    for (int i = 0; i < 8; ++i) {
        ts[i].frame_index = i;
        ts[i].total_ms = 40.0;
    }
    FpsReport r = fps_report(ts);
    EXPECT_NEAR(r.mean_fps, 25.0, 1e-9);
    EXPECT_NEAR(r.median_fps, 25.0, 1e-9);
}

TEST(FpsReport, SixtySevenMsIsAboutFifteenFps) {
    std::vector<StageTimings> ts(4);
    for (auto& t : ts) t.total_ms = 66.67;
    EXPECT_NEAR(fps_report(ts).mean_fps, 15.0, 0.01);
}

TEST(FpsReport, AlternatingFramesUseArithmeticMean) {
    std::vector<StageTimings> ts(10);
    for (int i = 0; i < 10; ++i) ts[i].total_ms = i % 2 == 0 ? 20.0 : 60.0;
    FpsReport r = fps_report(ts);
    EXPECT_NEAR(r.mean_fps, 25.0, 1e-9);  // mean 40 ms
}

TEST(FpsReport, StageMeansAndHardwarePresent) {
    std::vector<StageTimings> ts(3);
    for (auto& t : ts) {
        t.flow_ms = 4.0;
        t.detect_ms = 10.0;
        t.associate_ms = 1.0;
        t.refine_ms = 0.5;
        t.update_ms = 0.5;
        t.total_ms = 16.0;
    }
    FpsReport r = fps_report(ts);
    EXPECT_NEAR(r.flow_ms, 4.0, 1e-9);
    EXPECT_NEAR(r.detect_ms, 10.0, 1e-9);
    EXPECT_FALSE(r.hardware.empty());
}

TEST(FpsReport, EmptyInputThrows) {
    EXPECT_THROW(fps_report({}), ValidationError);
}
