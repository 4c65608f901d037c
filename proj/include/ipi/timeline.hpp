#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace ipi {

using Tick = int;

/// One sampled frame at 1 FPS. `source` is opaque to the runtime: a file
/// path, a `data:` URI, or a synthetic reference.
struct Frame {
    Tick index = 0;
    std::string source;

    bool operator==(const Frame&) const = default;
};

/// Immutable snapshot of the most recent frames ending at `end_tick`.
struct FrameWindow {
    Tick end_tick = 0;
    int capacity = 16;
    std::vector<Frame> frames;

    bool empty() const { return frames.empty(); }
    bool operator==(const FrameWindow&) const = default;
};

struct ScheduledEvent {
    Tick at_tick = 1;
    std::string utterance;
    std::string event_id;
};

/// Random-access frame store. Implementations must be safe for concurrent
/// reads.
class FrameSource {
public:
    virtual ~FrameSource() = default;

    virtual Tick length() const = 0;
    virtual Frame frame(Tick index) const = 0;

    /// Called by the clock whenever it advances. Sources that care about
    /// causality (the tripwire) use it as their horizon.
    virtual void on_advance(Tick /*now*/) {}
};

/// Frames that carry only a reference string, e.g. "synthetic://inst/7".
class SyntheticFrameSource : public FrameSource {
public:
    SyntheticFrameSource(std::string prefix, Tick length);

    Tick length() const override { return length_; }
    Frame frame(Tick index) const override;

private:
    std::string prefix_;
    Tick length_;
};

/// Explicit per-tick references, index i+1 -> refs[i].
class ListFrameSource : public FrameSource {
public:
    explicit ListFrameSource(std::vector<std::string> refs);

    Tick length() const override { return static_cast<Tick>(refs_.size()); }
    Frame frame(Tick index) const override;

private:
    std::vector<std::string> refs_;
};

/// A directory of images whose file stems are tick numbers (1.jpg, 0002.png,
/// ...). Ticks must be gap-free from 1.
class DirectoryFrameSource : public FrameSource {
public:
    explicit DirectoryFrameSource(const std::filesystem::path& dir);

    Tick length() const override { return static_cast<Tick>(paths_.size()); }
    Frame frame(Tick index) const override;

private:
    std::vector<std::string> paths_;
};

/// Frames pushed by a live client. Length grows as frames arrive.
class PushFrameSource : public FrameSource {
public:
    /// Frames must arrive in order: index == length() + 1.
    void push(Frame frame);

    Tick length() const override;
    Frame frame(Tick index) const override;

private:
    mutable std::mutex mutex_;
    std::vector<std::string> refs_;
};

/// Tripwire wrapper recording every frame access together with the clock
/// horizon at the time of the access.
class RecordingFrameSource : public FrameSource {
public:
    explicit RecordingFrameSource(std::shared_ptr<FrameSource> inner);

    Tick length() const override { return inner_->length(); }
    Frame frame(Tick index) const override;
    void on_advance(Tick now) override;

    std::size_t access_count() const;
    /// Accesses to an index greater than the horizon at access time.
    std::size_t violations() const;
    Tick max_index_read() const;

private:
    std::shared_ptr<FrameSource> inner_;
    mutable std::mutex mutex_;
    Tick horizon_ = 0;
    mutable std::size_t accesses_ = 0;
    mutable std::size_t violations_ = 0;
    mutable Tick max_read_ = 0;
};

/// Window of min(capacity, t) frames ending at t.
FrameWindow window_at(const FrameSource& stream, Tick t, int capacity = 16);

/// The streaming clock. Owns the frame source and the scheduled events and
/// never hands out a frame beyond the current tick.
class Timeline {
public:
    struct Step {
        FrameWindow window;
        std::vector<ScheduledEvent> due;
    };

    Timeline(std::shared_ptr<FrameSource> source, std::vector<ScheduledEvent> events,
             int window_capacity = 16);

    /// Advances exactly one tick. Anything other than current()+1 is a
    /// protocol violation.
    Step advance(Tick to_tick);

    /// Current window without advancing. Requires current() >= 1.
    FrameWindow window() const;

    Tick current() const { return current_; }
    int window_capacity() const { return capacity_; }
    const FrameSource& source() const { return *source_; }
    std::size_t delivered_count() const { return delivered_; }

    /// Restores the clock position (snapshot resume). Events at or before
    /// `tick` are treated as already delivered.
    void seek(Tick tick);

    /// Appends an event for a future tick (live sessions).
    void schedule(ScheduledEvent event);

private:
    std::shared_ptr<FrameSource> source_;
    std::multimap<Tick, ScheduledEvent> events_;
    int capacity_;
    Tick current_ = 0;
    std::size_t delivered_ = 0;
};

}  // namespace ipi
