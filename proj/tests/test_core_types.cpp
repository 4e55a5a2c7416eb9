#include "doctest.h"
#include "msadapt/core_types.hpp"

using namespace msadapt;

namespace {

SubjectRecord tiny_subject() {
    SubjectRecord r;
    r.subject_id = "s01";
    r.site = {"siteA"};
    r.t1w = Volume3D(4, 4, 4, 1.0f);
    r.flair = Volume3D(4, 4, 4, 1.0f);
    r.brain_mask = LabelMask(4, 4, 4, 1);
    LabelMask lesion(4, 4, 4, 0);
    lesion.at(1, 1, 1) = 1;
    r.lesion_mask = lesion;
    return r;
}

}  // namespace

TEST_CASE("volume indexing is x-fastest") {
    Volume3D v(2, 3, 4);
    CHECK(v.index(1, 0, 0) == 1);
    CHECK(v.index(0, 1, 0) == 2);
    CHECK(v.index(0, 0, 1) == 6);
    CHECK(v.index(1, 2, 3) == 23);
}

TEST_CASE("volume validation rejects non-finite data and bad spacing") {
    Volume3D v(2, 2, 2, 1.0f);
    CHECK_NOTHROW(v.validate());
    v.data[3] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(v.validate(), ValidationError);
    v.data[3] = 0.0f;
    v.spacing = {0.0, 1.0, 1.0};
    CHECK_THROWS_AS(v.validate(), ValidationError);
}

TEST_CASE("label mask validation rejects values outside {0,1}") {
    LabelMask m(2, 2, 2, 1);
    CHECK_NOTHROW(m.validate());
    m.data[0] = 2;
    CHECK_THROWS_AS(m.validate(), ValidationError);
}

TEST_CASE("validate_subject accepts a consistent record") {
    CHECK_NOTHROW(validate_subject(tiny_subject()));
}

TEST_CASE("validate_subject catches grid mismatches") {
    auto r = tiny_subject();
    r.flair = Volume3D(4, 4, 5, 1.0f);
    CHECK_THROWS_AS(validate_subject(r), ValidationError);
}

TEST_CASE("validate_subject requires lesions inside the brain mask") {
    auto r = tiny_subject();
    r.brain_mask.at(1, 1, 1) = 0;  // lesion voxel now outside the brain
    CHECK_THROWS_AS(validate_subject(r), ValidationError);
}

TEST_CASE("validate_subject requires a subject id") {
    auto r = tiny_subject();
    r.subject_id.clear();
    CHECK_THROWS_AS(validate_subject(r), ValidationError);
}

TEST_CASE("stack_channels interleaves T1w then FLAIR") {
    std::vector<float> t1w(8, 1.0f), flair(8, 2.0f);
    t1w[3] = 5.0f;
    auto t = stack_channels(t1w, flair, 2);
    REQUIRE(t.shape == std::vector<int64_t>{2, 2, 2, 2});
    CHECK(t.data[3] == 5.0f);
    CHECK(t.data[8] == 2.0f);
    CHECK(t.data[0] == 1.0f);
}

TEST_CASE("tensor shape bookkeeping") {
    Tensor<float> t({2, 3, 4});
    CHECK(t.numel() == 24);
    t.zero();
    CHECK(t.data[5] == 0.0f);
}
