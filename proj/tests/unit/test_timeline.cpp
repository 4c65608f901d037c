#include <gtest/gtest.h>

#include "ipi/error.hpp"
#include "ipi/timeline.hpp"
#include "support.hpp"

using namespace ipi;

TEST(Window, PartialAtStreamStart) {
    SyntheticFrameSource s("x", 40);
    auto w = window_at(s, 3, 16);
    EXPECT_EQ(w.end_tick, 3);
    ASSERT_EQ(w.frames.size(), 3u);
    EXPECT_EQ(w.frames.front().index, 1);
    EXPECT_EQ(w.frames.back().source, "synthetic://x/3");
}

TEST(Window, FullCapacity) {
    SyntheticFrameSource s("x", 40);
    auto w = window_at(s, 30, 16);
    ASSERT_EQ(w.frames.size(), 16u);
    EXPECT_EQ(w.frames.front().index, 15);
    EXPECT_EQ(w.frames.back().index, 30);
}

TEST(Window, RejectsBadArguments) {
    SyntheticFrameSource s("x", 5);
    EXPECT_THROW(window_at(s, 6, 4), BoundsError);
    EXPECT_THROW(window_at(s, 2, 0), ValidationError);
}

TEST(Timeline, AdvancesOneTickAtATime) {
    auto src = std::make_shared<SyntheticFrameSource>("x", 10);
    Timeline tl(src, {{3, "hello", "e1"}, {3, "again", "e2"}, {5, "later", "e3"}}, 4);
    EXPECT_THROW(tl.window(), ProtocolError);
    EXPECT_TRUE(tl.advance(1).due.empty());
    EXPECT_THROW(tl.advance(3), ProtocolError);
    EXPECT_THROW(tl.advance(1), ProtocolError);
    tl.advance(2);
    auto step = tl.advance(3);
    ASSERT_EQ(step.due.size(), 2u);
    EXPECT_EQ(step.due[0].event_id, "e1");
    EXPECT_EQ(step.due[1].event_id, "e2");
    EXPECT_EQ(step.window.frames.size(), 3u);
    EXPECT_EQ(tl.delivered_count(), 2u);
}

TEST(Timeline, StopsAtStreamEnd) {
    auto src = std::make_shared<SyntheticFrameSource>("x", 2);
    Timeline tl(src, {});
    tl.advance(1);
    tl.advance(2);
    EXPECT_THROW(tl.advance(3), BoundsError);
}

TEST(Timeline, RejectsBadEvents) {
    auto src = std::make_shared<SyntheticFrameSource>("x", 5);
    EXPECT_THROW(Timeline(src, {{0, "u", "e"}}), ValidationError);
    EXPECT_THROW(Timeline(src, {{1, "u", "e"}, {2, "v", "e"}}), ValidationError);
    Timeline tl(src, {});
    tl.advance(1);
    tl.advance(2);
    EXPECT_THROW(tl.schedule({2, "late", "e9"}), ProtocolError);
    tl.schedule({3, "soon", "e9"});
    EXPECT_EQ(tl.advance(3).due.size(), 1u);
}

TEST(Timeline, SeekSkipsDeliveredEvents) {
    auto src = std::make_shared<SyntheticFrameSource>("x", 10);
    Timeline tl(src, {{2, "a", "e1"}, {6, "b", "e2"}});
    tl.seek(4);
    EXPECT_EQ(tl.current(), 4);
    tl.advance(5);
    EXPECT_EQ(tl.advance(6).due.size(), 1u);
}

TEST(Recording, FlagsReadsBeyondTheClock) {
    auto inner = std::make_shared<SyntheticFrameSource>("x", 10);
    auto rec = std::make_shared<RecordingFrameSource>(inner);
    Timeline tl(rec, {});
    for (Tick t = 1; t <= 5; ++t) tl.advance(t);
    EXPECT_EQ(rec->violations(), 0u);
    EXPECT_GT(rec->access_count(), 0u);
    EXPECT_EQ(rec->max_index_read(), 5);
    rec->frame(7);
    EXPECT_EQ(rec->violations(), 1u);
}

TEST(Sources, ListAndPush) {
    ListFrameSource list({"a.jpg", "b.jpg"});
    EXPECT_EQ(list.length(), 2);
    EXPECT_EQ(list.frame(2).source, "b.jpg");
    EXPECT_THROW(list.frame(3), BoundsError);

    PushFrameSource push;
    push.push({1, "p1"});
    EXPECT_THROW(push.push({3, "p3"}), ProtocolError);
    push.push({2, "p2"});
    EXPECT_EQ(push.length(), 2);
    EXPECT_THROW(push.frame(3), BoundsError);
}

TEST(Sources, DirectoryNeedsGapFreeTicks) {
    ipi::testing::TempDir dir;
    for (const char* name : {"1.jpg", "0002.jpg", "3.png"}) std::ofstream(dir.path / name) << "x";
    DirectoryFrameSource ok(dir.path);
    EXPECT_EQ(ok.length(), 3);
    EXPECT_NE(ok.frame(2).source.find("0002.jpg"), std::string::npos);
    std::ofstream(dir.path / "5.jpg") << "x";
    EXPECT_THROW(DirectoryFrameSource{dir.path}, ConfigError);
    EXPECT_THROW(DirectoryFrameSource{dir.path / "missing"}, ConfigError);
}
