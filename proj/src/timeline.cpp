#include "ipi/timeline.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "ipi/error.hpp"

namespace ipi {

namespace fs = std::filesystem;

SyntheticFrameSource::SyntheticFrameSource(std::string prefix, Tick length)
    : prefix_(std::move(prefix)), length_(length) {
    if (length_ < 0) {
        throw ValidationError("synthetic frame source needs a non-negative length");
    }
}

Frame SyntheticFrameSource::frame(Tick index) const {
    if (index < 1 || index > length_) {
        throw BoundsError("frame " + std::to_string(index) + " outside stream of length " +
                          std::to_string(length_));
    }
    return Frame{index, "synthetic://" + prefix_ + "/" + std::to_string(index)};
}

ListFrameSource::ListFrameSource(std::vector<std::string> refs) : refs_(std::move(refs)) {}

Frame ListFrameSource::frame(Tick index) const {
    if (index < 1 || index > length()) {
        throw BoundsError("frame " + std::to_string(index) + " outside stream of length " +
                          std::to_string(length()));
    }
    return Frame{index, refs_[static_cast<std::size_t>(index - 1)]};
}

DirectoryFrameSource::DirectoryFrameSource(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw ConfigError("frame directory not found: " + dir.string());
    }
    std::map<Tick, std::string> by_tick;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto stem = entry.path().stem().string();
        const bool numeric = !stem.empty() &&
                             std::all_of(stem.begin(), stem.end(),
                                         [](unsigned char c) { return std::isdigit(c) != 0; });
        if (!numeric) continue;
        const Tick tick = std::stoi(stem);
        if (!by_tick.emplace(tick, entry.path().string()).second) {
            throw ConfigError("duplicate frame for tick " + std::to_string(tick) + " in " +
                              dir.string());
        }
    }
    Tick expected = 1;
    for (auto& [tick, path] : by_tick) {
        if (tick != expected) {
            throw ConfigError("frame directory " + dir.string() + " has a gap at tick " +
                              std::to_string(expected));
        }
        paths_.push_back(std::move(path));
        ++expected;
    }
}

Frame DirectoryFrameSource::frame(Tick index) const {
    if (index < 1 || index > length()) {
        throw BoundsError("frame " + std::to_string(index) + " outside stream of length " +
                          std::to_string(length()));
    }
    return Frame{index, paths_[static_cast<std::size_t>(index - 1)]};
}

void PushFrameSource::push(Frame frame) {
    std::lock_guard lock(mutex_);
    const auto expected = static_cast<Tick>(refs_.size()) + 1;
    if (frame.index != expected) {
        throw ProtocolError("pushed frame " + std::to_string(frame.index) + ", expected " +
                            std::to_string(expected));
    }
    refs_.push_back(std::move(frame.source));
}

Tick PushFrameSource::length() const {
    std::lock_guard lock(mutex_);
    return static_cast<Tick>(refs_.size());
}

Frame PushFrameSource::frame(Tick index) const {
    std::lock_guard lock(mutex_);
    if (index < 1 || index > static_cast<Tick>(refs_.size())) {
        throw BoundsError("frame " + std::to_string(index) + " has not been pushed");
    }
    return Frame{index, refs_[static_cast<std::size_t>(index - 1)]};
}

RecordingFrameSource::RecordingFrameSource(std::shared_ptr<FrameSource> inner)
    : inner_(std::move(inner)) {}

Frame RecordingFrameSource::frame(Tick index) const {
    {
        std::lock_guard lock(mutex_);
        ++accesses_;
        max_read_ = std::max(max_read_, index);
        if (index > horizon_) ++violations_;
    }
    return inner_->frame(index);
}

void RecordingFrameSource::on_advance(Tick now) {
    {
        std::lock_guard lock(mutex_);
        horizon_ = now;
    }
    inner_->on_advance(now);
}

std::size_t RecordingFrameSource::access_count() const {
    std::lock_guard lock(mutex_);
    return accesses_;
}

std::size_t RecordingFrameSource::violations() const {
    std::lock_guard lock(mutex_);
    return violations_;
}

Tick RecordingFrameSource::max_index_read() const {
    std::lock_guard lock(mutex_);
    return max_read_;
}

FrameWindow window_at(const FrameSource& stream, Tick t, int capacity) {
    if (capacity < 1) {
        throw ValidationError("window capacity must be >= 1");
    }
    if (t < 1 || t > stream.length()) {
        throw BoundsError("window end " + std::to_string(t) + " outside stream of length " +
                          std::to_string(stream.length()));
    }
    FrameWindow window;
    window.end_tick = t;
    window.capacity = capacity;
    const Tick first = std::max<Tick>(1, t - capacity + 1);
    window.frames.reserve(static_cast<std::size_t>(t - first + 1));
    for (Tick i = first; i <= t; ++i) {
        window.frames.push_back(stream.frame(i));
    }
    return window;
}

Timeline::Timeline(std::shared_ptr<FrameSource> source, std::vector<ScheduledEvent> events,
                   int window_capacity)
    : source_(std::move(source)), capacity_(window_capacity) {
    if (!source_) throw ValidationError("timeline needs a frame source");
    if (capacity_ < 1) throw ValidationError("window capacity must be >= 1");
    std::set<std::string> ids;
    for (auto& event : events) {
        if (event.at_tick < 1) {
            throw ValidationError("event " + event.event_id + " scheduled before tick 1");
        }
        if (!ids.insert(event.event_id).second) {
            throw ValidationError("duplicate event id " + event.event_id);
        }
        const Tick at = event.at_tick;
        events_.emplace(at, std::move(event));
    }
}

Timeline::Step Timeline::advance(Tick to_tick) {
    if (to_tick != current_ + 1) {
        throw ProtocolError("clock at tick " + std::to_string(current_) +
                            " cannot advance to " + std::to_string(to_tick));
    }
    if (to_tick > source_->length()) {
        throw BoundsError("stream ends at tick " + std::to_string(source_->length()));
    }
    current_ = to_tick;
    source_->on_advance(current_);

    Step step;
    step.window = window_at(*source_, current_, capacity_);
    // multimap keeps insertion order among equal keys
    auto [first, last] = events_.equal_range(current_);
    for (auto it = first; it != last; ++it) {
        step.due.push_back(it->second);
    }
    delivered_ += step.due.size();
    return step;
}

FrameWindow Timeline::window() const {
    if (current_ < 1) throw ProtocolError("no frames observed yet");
    return window_at(*source_, current_, capacity_);
}

void Timeline::seek(Tick tick) {
    if (tick < 0 || tick > source_->length()) {
        throw BoundsError("cannot seek to tick " + std::to_string(tick));
    }
    current_ = tick;
    source_->on_advance(current_);
    delivered_ = 0;
    for (const auto& [at, event] : events_) {
        if (at <= tick) ++delivered_;
    }
}

void Timeline::schedule(ScheduledEvent event) {
    if (event.at_tick <= current_) {
        throw ProtocolError("event " + event.event_id + " scheduled in the past");
    }
    for (const auto& [at, existing] : events_) {
        if (existing.event_id == event.event_id) {
            throw ValidationError("duplicate event id " + event.event_id);
        }
    }
    const Tick at = event.at_tick;
    events_.emplace(at, std::move(event));
}

}  // namespace ipi
