#include <gtest/gtest.h>

#include "maskaudit/perturb.hpp"
#include "testutil.hpp"

using namespace maskaudit;
using testutil::brute_force_iou;
using testutil::random_blob;
using testutil::rect_mask;

namespace {

BinaryMask big_square() { return rect_mask(96, 96, 28, 28, 40, 40); } // area 1600

} // namespace

TEST(GenPerfect, ReturnsGroundTruthBitForBit) {
    const BinaryMask gt = rect_mask(32, 32, 4, 4, 10, 10);
    const GeneratedSample s = gen_perfect(gt);
    EXPECT_EQ(s.mask, gt);
    EXPECT_DOUBLE_EQ(s.label.iou, 1.0);
    EXPECT_EQ(s.label.mask_type, MaskType::perfect);
    EXPECT_EQ(s.label.action, Action::accept);
    EXPECT_EQ(s.label.difficulty, Difficulty::not_applicable);
    EXPECT_DOUBLE_EQ(mask_iou(s.mask, gt), 1.0);
}

TEST(GenPerfect, EmptyGtThrows) {
    EXPECT_THROW(gen_perfect(BinaryMask(8, 8)), EmptyGroundTruth);
}

TEST(GenGeometric, DilateHardLandsInInterval) {
    const BinaryMask gt = big_square();
    const GeneratedSample s =
        gen_geometric(gt, MaskType::dilate, kHardTarget, Difficulty::hard, 7);
    EXPECT_TRUE(is_subset(gt, s.mask));
    EXPECT_GE(s.mask.area(), 1600);
    const double iou = mask_iou(s.mask, gt);
    EXPECT_TRUE(kHardTarget.contains(iou)) << iou;
    EXPECT_DOUBLE_EQ(iou, s.label.iou);
    EXPECT_EQ(s.label.action, Action::minor_revision);
}

TEST(GenGeometric, ErodeMediumSubsetNoFalsePositives) {
    const BinaryMask gt = big_square();
    const GeneratedSample s =
        gen_geometric(gt, MaskType::erode, kMediumTarget, Difficulty::medium, 11);
    EXPECT_TRUE(is_subset(s.mask, gt)); // zero false positives
    const double iou = mask_iou(s.mask, gt);
    EXPECT_TRUE(kMediumTarget.contains(iou)) << iou;
    EXPECT_EQ(s.label.action, Action::major_revision);
}

TEST(GenGeometric, CutoutHoleIsInterior) {
    const BinaryMask gt = big_square();
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        for (const IoUTarget& target : {kHardTarget, kMediumTarget}) {
            const Difficulty d =
                target == kHardTarget ? Difficulty::hard : Difficulty::medium;
            const GeneratedSample s = gen_geometric(gt, MaskType::cutout, target, d, seed);
            EXPECT_TRUE(is_subset(s.mask, gt));
            // The gt boundary ring stays foreground: holes never touch it.
            EXPECT_TRUE(is_subset(boundary(gt), s.mask));
            EXPECT_TRUE(target.contains(mask_iou(s.mask, gt)));
            EXPECT_LT(s.mask.area(), gt.area());
        }
    }
}

TEST(GenGeometric, DegenerateObject) {
    const BinaryMask tiny = rect_mask(16, 16, 4, 4, 3, 3); // area 9 < 20
    for (MaskType kind : {MaskType::cutout, MaskType::dilate, MaskType::erode}) {
        EXPECT_THROW(gen_geometric(tiny, kind, kHardTarget, Difficulty::hard, 1),
                     DegenerateObject);
    }
}

TEST(GenGeometric, MinimumAreaBoundaryIsGenerable) {
    // Area exactly 20 is the smallest object the interval maths accepts.
    const BinaryMask gt = rect_mask(24, 24, 6, 6, 5, 4);
    for (MaskType kind : {MaskType::dilate, MaskType::erode}) {
        for (const IoUTarget& target : {kHardTarget, kMediumTarget}) {
            const Difficulty d =
                target == kHardTarget ? Difficulty::hard : Difficulty::medium;
            const GeneratedSample s = gen_geometric(gt, kind, target, d, 5);
            EXPECT_TRUE(target.contains(mask_iou(s.mask, gt)));
        }
    }
}

TEST(GenGeometric, CutoutWithoutInteriorIsUnreachable) {
    const BinaryMask line = rect_mask(32, 32, 3, 5, 25, 1); // area 25, no interior
    EXPECT_THROW(gen_geometric(line, MaskType::cutout, kHardTarget, Difficulty::hard, 1),
                 UnreachableTarget);
}

TEST(GenGeometric, ThinLineStillWorksForDilateAndErode) {
    const BinaryMask line = rect_mask(32, 32, 3, 5, 25, 1);
    for (MaskType kind : {MaskType::dilate, MaskType::erode}) {
        const GeneratedSample s = gen_geometric(line, kind, kHardTarget, Difficulty::hard, 9);
        EXPECT_TRUE(kHardTarget.contains(mask_iou(s.mask, line)));
    }
}

TEST(GenGeometric, CrossingBetweenLastProbeAndCapIsFound) {
    // Corner square on a 100x100 canvas: rectangle dilation by level k
    // covers (10+k)^2 pixels, so a target just above the saturation IoU
    // crosses only at level 90 - past the last power-of-two probe (64)
    // and reachable only because the probe clamps to the level cap.
    const BinaryMask gt = rect_mask(100, 100, 0, 0, 10, 10);
    const IoUTarget target{0.009, 100.0 / 9801.0};
    bool exercised = false;
    for (std::uint64_t seed = 0; seed < 16 && !exercised; ++seed) {
        try {
            const GeneratedSample s =
                gen_geometric(gt, MaskType::dilate, target, Difficulty::medium, seed);
            ASSERT_TRUE(s.spec.element.has_value());
            EXPECT_EQ(s.spec.element->shape, ElementShape::rectangle);
            EXPECT_TRUE(target.contains(mask_iou(s.mask, gt)));
            exercised = true;
        } catch (const UnreachableTarget&) {
            // Elliptical elements cannot reach this corner-case target.
        }
    }
    EXPECT_TRUE(exercised);
}

TEST(GenGeometric, DeterministicReplay) {
    maskaudit::SplitMix64 rng(99);
    for (int iter = 0; iter < 10; ++iter) {
        const BinaryMask gt = random_blob(rng, 64, 64, 60);
        const std::uint64_t seed = rng.next();
        for (MaskType kind : {MaskType::cutout, MaskType::dilate, MaskType::erode}) {
            const GeneratedSample a =
                gen_geometric(gt, kind, kHardTarget, Difficulty::hard, seed);
            const GeneratedSample b =
                gen_geometric(gt, kind, kHardTarget, Difficulty::hard, seed);
            EXPECT_EQ(a.mask, b.mask);
            EXPECT_EQ(a.spec, b.spec);
            EXPECT_EQ(a.label, b.label);
        }
    }
}

TEST(GenGeometric, RelabelRoundTripOnRandomBlobs) {
    maskaudit::SplitMix64 rng(4242);
    for (int iter = 0; iter < 15; ++iter) {
        const BinaryMask gt = random_blob(rng, 64, 64, 80);
        for (MaskType kind : {MaskType::cutout, MaskType::dilate, MaskType::erode}) {
            double hard_iou = -1.0, medium_iou = -1.0;
            for (const IoUTarget& target : {kHardTarget, kMediumTarget}) {
                const Difficulty d =
                    target == kHardTarget ? Difficulty::hard : Difficulty::medium;
                std::optional<GeneratedSample> s;
                try {
                    s = gen_geometric(gt, kind, target, d, rng.next());
                } catch (const UnreachableTarget&) {
                    continue; // legitimate for awkward blobs
                }
                const double recomputed = brute_force_iou(s->mask, gt);
                EXPECT_NEAR(recomputed, s->label.iou, 1e-12);
                EXPECT_EQ(derive_action(kind, s->label.iou), s->label.action);
                EXPECT_TRUE(target.contains(s->label.iou));
                if (kind == MaskType::dilate) {
                    EXPECT_TRUE(is_subset(gt, s->mask));
                } else {
                    EXPECT_TRUE(is_subset(s->mask, gt));
                }
                (d == Difficulty::hard ? hard_iou : medium_iou) = s->label.iou;
            }
            if (hard_iou >= 0.0 && medium_iou >= 0.0) {
                EXPECT_GE(hard_iou, medium_iou); // difficulty/interval coupling
            }
        }
    }
}

TEST(SelectFullNegs, FiltersOverlapAndEmpty) {
    const BinaryMask gt = rect_mask(32, 32, 4, 4, 8, 8);
    BinaryMask overlapping = rect_mask(32, 32, 20, 20, 4, 4);
    overlapping.set(5, 5, true); // one shared pixel with gt
    const std::vector<NegativeCandidate> candidates = {
        {"overlap", overlapping},
        {"empty", BinaryMask(32, 32)},
        {"ok", rect_mask(32, 32, 20, 4, 6, 6)},
    };
    const auto selected = select_full_negs(gt, candidates, 3);
    ASSERT_EQ(selected.size(), 1u);
    EXPECT_EQ(selected[0].id, "ok");
    EXPECT_DOUBLE_EQ(selected[0].label.iou, 0.0);
    EXPECT_EQ(selected[0].label.mask_type, MaskType::full_neg);
    EXPECT_EQ(selected[0].label.action, Action::reject);
}

TEST(SelectFullNegs, RanksByBboxIouDescending) {
    // gt box [4,4]..[13,13]; candidates at growing horizontal offsets get
    // strictly decreasing bbox IoU but stay pixel-disjoint (gt occupies
    // only the left half of its own bbox).
    BinaryMask gt(48, 48);
    for (int y = 4; y <= 13; ++y) {
        for (int x = 4; x <= 8; ++x) gt.set(x, y, true);
    }
    gt.set(13, 20, true); // stretch the bbox without touching candidate rows
    std::vector<NegativeCandidate> candidates;
    const std::vector<std::pair<std::string, int>> offsets = {
        {"a", 24}, {"b", 18}, {"c", 12}, {"d", 10}};
    for (const auto& [id, x0] : offsets) {
        candidates.push_back({id, rect_mask(48, 48, x0, 4, 10, 10)});
    }

    // Brute-force ranking oracle.
    std::vector<std::pair<double, std::string>> expected;
    for (const NegativeCandidate& c : candidates) {
        expected.emplace_back(bbox_iou(bbox(c.mask), bbox(gt)), c.id);
    }
    std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    const auto selected = select_full_negs(gt, candidates, 3);
    ASSERT_EQ(selected.size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(selected[i].id, expected[i].second);
}

TEST(SelectFullNegs, TieBreakById) {
    const BinaryMask gt = rect_mask(32, 32, 4, 4, 8, 8);
    const BinaryMask same_box_1 = rect_mask(32, 32, 20, 4, 8, 8);
    const BinaryMask same_box_2 = rect_mask(32, 32, 20, 4, 8, 8);
    const auto selected = select_full_negs(
        gt, {{"zeta", same_box_1}, {"alpha", same_box_2}}, 3);
    ASSERT_EQ(selected.size(), 2u);
    EXPECT_EQ(selected[0].id, "alpha");
    EXPECT_EQ(selected[1].id, "zeta");
}

TEST(SelectFullNegs, ZeroCandidates) {
    const BinaryMask gt = rect_mask(32, 32, 4, 4, 8, 8);
    EXPECT_TRUE(select_full_negs(gt, {}, 3).empty());
}

TEST(GenMerges, ArithmeticAndThresholds) {
    // |gt| = 80, |H| = 20 -> s = 0.8, major revision, medium.
    const BinaryMask gt80 = rect_mask(64, 64, 2, 2, 8, 10);
    const GeneratedSample med =
        gen_merge_one(gt80, "h20", rect_mask(64, 64, 30, 30, 4, 5));
    EXPECT_DOUBLE_EQ(med.label.iou, 0.8);
    EXPECT_EQ(med.label.action, Action::major_revision);
    EXPECT_EQ(med.label.difficulty, Difficulty::medium);
    EXPECT_DOUBLE_EQ(mask_iou(med.mask, gt80), 0.8);

    // |gt| = 95, |H| = 5 -> s = 0.95, minor revision, hard.
    BinaryMask gt95 = rect_mask(64, 64, 2, 2, 5, 19);
    const GeneratedSample hard =
        gen_merge_one(gt95, "h5", rect_mask(64, 64, 40, 40, 5, 1));
    EXPECT_DOUBLE_EQ(hard.label.iou, 0.95);
    EXPECT_EQ(hard.label.action, Action::minor_revision);
    EXPECT_EQ(hard.label.difficulty, Difficulty::hard);

    // |gt| = 50, |H| = 150 -> s = 0.25, reject, easy.
    const BinaryMask gt50 = rect_mask(64, 64, 2, 2, 5, 10);
    const GeneratedSample easy =
        gen_merge_one(gt50, "h150", rect_mask(64, 64, 20, 20, 10, 15));
    EXPECT_DOUBLE_EQ(easy.label.iou, 0.25);
    EXPECT_EQ(easy.label.action, Action::reject);
    EXPECT_EQ(easy.label.difficulty, Difficulty::easy);
}

TEST(GenMerges, OverlapViolation) {
    const BinaryMask gt = rect_mask(32, 32, 4, 4, 8, 8);
    BinaryMask h = rect_mask(32, 32, 10, 10, 8, 8); // overlaps gt
    EXPECT_THROW(gen_merge_one(gt, "bad", h), OverlapViolation);
}

TEST(GenInstance, FullSlateWithThreeNegatives) {
    const BinaryMask gt = big_square();
    const std::vector<NegativeCandidate> negatives = {
        {"n1", rect_mask(96, 96, 75, 10, 10, 16)},
        {"n2", rect_mask(96, 96, 75, 40, 10, 40)},
        {"n3", rect_mask(96, 96, 4, 80, 80, 10)},
    };
    const InstanceSamples out = gen_instance(gt, negatives, 31337);
    EXPECT_FALSE(out.partial);
    EXPECT_EQ(out.samples.size(), 13u);

    std::map<MaskType, int> counts;
    for (const SlotSample& s : out.samples) ++counts[s.label.mask_type];
    EXPECT_EQ(counts[MaskType::perfect], 1);
    EXPECT_EQ(counts[MaskType::cutout], 2);
    EXPECT_EQ(counts[MaskType::dilate], 2);
    EXPECT_EQ(counts[MaskType::erode], 2);
    EXPECT_EQ(counts[MaskType::merge], 3);
    EXPECT_EQ(counts[MaskType::full_neg], 3);
}

TEST(GenInstance, NoNegativesGivesSeven) {
    const BinaryMask gt = big_square();
    const InstanceSamples out = gen_instance(gt, {}, 1);
    EXPECT_EQ(out.samples.size(), 7u);
    EXPECT_FALSE(out.partial);
}

TEST(GenInstance, DeterministicAcrossRuns) {
    maskaudit::SplitMix64 rng(555);
    const BinaryMask gt = random_blob(rng, 64, 64, 120);
    const std::vector<NegativeCandidate> negatives = {
        {"n1", rect_mask(64, 64, 2, 56, 30, 6)}};
    const InstanceSamples a = gen_instance(gt, negatives, 777);
    const InstanceSamples b = gen_instance(gt, negatives, 777);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        EXPECT_EQ(a.samples[i].slot_id, b.samples[i].slot_id);
        EXPECT_EQ(a.samples[i].mask, b.samples[i].mask);
        EXPECT_EQ(a.samples[i].spec, b.samples[i].spec);
    }
}

TEST(GenInstance, SmallObjectDropsGeometricSlots) {
    const BinaryMask gt = rect_mask(32, 32, 4, 4, 4, 4); // area 16 < 20
    const InstanceSamples out = gen_instance(gt, {}, 3);
    EXPECT_TRUE(out.partial);
    EXPECT_EQ(out.samples.size(), 1u); // perfect only
    EXPECT_EQ(out.dropped.size(), 6u);
}

TEST(GenInstance, EmptyGtThrows) {
    EXPECT_THROW(gen_instance(BinaryMask(16, 16), {}, 1), EmptyGroundTruth);
}

TEST(GenInstance, RelabelRoundTripOverWholeInstance) {
    const BinaryMask gt = big_square();
    const std::vector<NegativeCandidate> negatives = {
        {"n1", rect_mask(96, 96, 75, 10, 10, 16)},
        {"n2", rect_mask(96, 96, 75, 40, 10, 40)},
    };
    const InstanceSamples out = gen_instance(gt, negatives, 2024);
    for (const SlotSample& s : out.samples) {
        if (s.label.mask_type == MaskType::full_neg) {
            EXPECT_TRUE(is_disjoint(s.mask, gt));
            EXPECT_DOUBLE_EQ(s.label.iou, 0.0);
        } else {
            EXPECT_NEAR(brute_force_iou(s.mask, gt), s.label.iou, 1e-12);
        }
        EXPECT_EQ(derive_action(s.label.mask_type, s.label.iou), s.label.action);
    }
}
