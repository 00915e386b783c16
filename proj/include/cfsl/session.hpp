#pragma once

// Sequential access to one episode. A session hands out support sets strictly
// in order, each exactly once, and exposes the target set only after the last
// support set has been consumed. Learners may keep anything they like in the
// session's memory bank; its peak size is what ATM audits.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfsl/error.hpp"
#include "cfsl/metrics.hpp"
#include "cfsl/pack.hpp"
#include "cfsl/rng.hpp"
#include "cfsl/sampler.hpp"

namespace cfsl {

struct SupportSet {
  std::uint32_t position = 0;
  InputGeometry geometry;
  std::vector<std::uint8_t> pixels;  // count x H x W x C
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  ImageView image(std::size_t i) const {
    const auto n = geometry.scalars();
    return {geometry.height, geometry.width, geometry.channels,
            std::span<const std::uint8_t>(pixels).subspan(i * n, n)};
  }
};

/// Target inputs only; assigned labels stay inside the session.
struct TargetSet {
  InputGeometry geometry;
  std::vector<std::uint8_t> pixels;
  std::size_t count = 0;

  ImageView image(std::size_t i) const {
    const auto n = geometry.scalars();
    return {geometry.height, geometry.width, geometry.channels,
            std::span<const std::uint8_t>(pixels).subspan(i * n, n)};
  }
};

struct MemoryEntry {
  std::string tag;
  std::vector<std::byte> payload;  // empty for accounted-only entries
  std::uint64_t bytes = 0;
  std::uint32_t element_width = 4;
};

/// Byte-accounted learner store. Storing under an existing tag replaces that
/// entry; total_bytes is the live size and peak_bytes its running maximum.
class MemoryBank {
 public:
  void store(const std::string& tag, std::span<const std::byte> payload,
             std::uint32_t element_width) {
    put({tag, {payload.begin(), payload.end()}, payload.size(), element_width});
  }

  /// Records `bytes` without holding a payload (representations kept elsewhere).
  void store_accounted(const std::string& tag, std::uint64_t bytes, std::uint32_t element_width) {
    put({tag, {}, bytes, element_width});
  }

  const MemoryEntry* find(const std::string& tag) const {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const MemoryEntry& e) { return e.tag == tag; });
    return it == entries_.end() ? nullptr : &*it;
  }

  const std::vector<MemoryEntry>& entries() const { return entries_; }
  std::uint64_t total_bytes() const { return total_; }
  std::uint64_t peak_bytes() const { return peak_; }

 private:
  void put(MemoryEntry entry) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const MemoryEntry& e) { return e.tag == entry.tag; });
    if (it != entries_.end()) {
      total_ -= it->bytes;
      total_ += entry.bytes;
      *it = std::move(entry);
    } else {
      total_ += entry.bytes;
      entries_.push_back(std::move(entry));
    }
    peak_ = std::max(peak_, total_);
  }

  std::vector<MemoryEntry> entries_;
  std::uint64_t total_ = 0;
  std::uint64_t peak_ = 0;
};

enum class SessionState { Streaming, AwaitingPredictions, Closed };

struct EpisodeScore {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::uint64_t memory_bytes = 0;  // peak bank bytes at close
  AtmReport atm;
};

/// Session operations, for transcripts and protocol conformance checks.
enum class SessionOp { NextSupport, Support, Store, RequestTarget, SubmitPredictions };

struct TranscriptEntry {
  SessionOp op;
  std::uint64_t arg = 0;                 // requested position / bytes / label count
  std::optional<ErrorCode> error;        // nullopt on success
};

class EpisodeSession {
 public:
  EpisodeSession(std::shared_ptr<const DatasetPack> pack, Episode episode)
      : pack_(std::move(pack)), episode_(std::move(episode)) {}

  const TaskConfig& config() const { return episode_.config; }
  std::uint64_t episode_index() const { return episode_.episode_index; }
  InputGeometry geometry() const {
    return {pack_->height(), pack_->width(), pack_->channels()};
  }
  std::uint32_t cursor() const { return cursor_; }
  std::uint32_t nss() const { return episode_.config.nss; }
  SessionState state() const { return state_; }
  std::uint32_t output_label_count() const { return cfsl::output_label_count(config()); }
  std::size_t target_size() const { return episode_.target.size(); }

  /// Per-session seed for learner randomness, independent of the sampler stream.
  std::uint64_t seed() const {
    return stream_seed(episode_.config.seed ^ 0xA5A5A5A5A5A5A5A5ULL, episode_.episode_index);
  }

  const MemoryBank& memory() const { return bank_; }
  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }

  SupportSet next_support() { return support(cursor_ + 1, SessionOp::NextSupport); }

  /// Explicit-position access: only position cursor+1 is ever served.
  SupportSet support(std::uint32_t position) { return support(position, SessionOp::Support); }

  void store(const std::string& tag, std::span<const std::byte> payload,
             std::uint32_t element_width) {
    guard(SessionOp::Store, payload.size(), [&] {
      require_open();
      bank_.store(tag, payload, element_width);
    });
  }

  void store_accounted(const std::string& tag, std::uint64_t bytes, std::uint32_t element_width) {
    guard(SessionOp::Store, bytes, [&] {
      require_open();
      bank_.store_accounted(tag, bytes, element_width);
    });
  }

  /// Idempotent until predictions are submitted.
  TargetSet request_target() {
    TargetSet out;
    guard(SessionOp::RequestTarget, 0, [&] {
      require_open();
      if (cursor_ < nss())
        throw Error(ErrorCode::TargetNotYetAvailable,
                    "consumed " + std::to_string(cursor_) + " of " + std::to_string(nss()) +
                        " support sets");
      state_ = SessionState::AwaitingPredictions;
      out.geometry = geometry();
      out.count = episode_.target.size();
      out.pixels.reserve(out.count * pack_->sample_bytes());
      for (const auto& t : episode_.target) {
        auto px = pack_->sample(t.sample.class_id, t.sample.instance);
        out.pixels.insert(out.pixels.end(), px.begin(), px.end());
      }
    });
    return out;
  }

  EpisodeScore submit_predictions(std::span<const std::uint32_t> predicted) {
    EpisodeScore score;
    guard(SessionOp::SubmitPredictions, predicted.size(), [&] {
      require_open();
      if (state_ != SessionState::AwaitingPredictions)
        throw Error(ErrorCode::TargetNotYetAvailable, "target set has not been requested");
      if (predicted.size() != episode_.target.size())
        throw Error(ErrorCode::PredictionShape,
                    "got " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(episode_.target.size()) + " targets");
      for (std::size_t i = 0; i < predicted.size(); ++i)
        score.correct += predicted[i] == episode_.target[i].label ? 1 : 0;
      score.total = predicted.size();
      score.accuracy = static_cast<double>(score.correct) / static_cast<double>(score.total);
      score.memory_bytes = bank_.peak_bytes();
      score.atm = atm(score.memory_bytes, episode_, geometry());
      state_ = SessionState::Closed;
    });
    return score;
  }

  void close() { state_ = SessionState::Closed; }

 private:
  SupportSet support(std::uint32_t position, SessionOp op) {
    SupportSet out;
    guard(op, position, [&] {
      require_open();
      if (position >= 1 && position <= cursor_)
        throw Error(ErrorCode::PastSetInaccessible,
                    "support set " + std::to_string(position) + " was already consumed");
      if (cursor_ >= nss() || state_ != SessionState::Streaming || position > nss())
        throw Error(ErrorCode::StreamExhausted, "all " + std::to_string(nss()) +
                                                    " support sets consumed");
      if (position != cursor_ + 1)
        throw Error(ErrorCode::SupportOutOfOrder,
                    "next support set is " + std::to_string(cursor_ + 1));
      const auto& ref = episode_.support_sets[cursor_];
      out.position = ref.position;
      out.geometry = geometry();
      out.pixels.reserve(ref.entries.size() * pack_->sample_bytes());
      for (const auto& e : ref.entries) {
        auto px = pack_->sample(e.sample.class_id, e.sample.instance);
        out.pixels.insert(out.pixels.end(), px.begin(), px.end());
        out.labels.push_back(e.label);
      }
      ++cursor_;
    });
    return out;
  }

  void require_open() const {
    if (state_ == SessionState::Closed) throw Error(ErrorCode::SessionClosed, "session is closed");
  }

  template <typename F>
  void guard(SessionOp op, std::uint64_t arg, F&& body) {
    try {
      body();
      transcript_.push_back({op, arg, std::nullopt});
    } catch (const Error& e) {
      transcript_.push_back({op, arg, e.code()});
      throw;
    }
  }

  std::shared_ptr<const DatasetPack> pack_;
  Episode episode_;
  std::uint32_t cursor_ = 0;
  SessionState state_ = SessionState::Streaming;
  MemoryBank bank_;
  std::vector<TranscriptEntry> transcript_;
};

}  // namespace cfsl
