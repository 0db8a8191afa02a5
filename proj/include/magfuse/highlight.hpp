#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "magfuse/data.hpp"
#include "magfuse/model.hpp"

namespace magfuse {

// A long multimodal sequence formed by concatenating corpus instances in
// file order. Per-step timestamps are interpolated within each instance's
// [start_time, end_time] span; they are present only when every instance
// carries timings.
struct Stream {
  std::vector<std::string> words;
  std::vector<std::vector<double>> visual;
  std::vector<std::vector<double>> acoustic;
  std::vector<double> step_start_time;  // empty when timings are unavailable
  std::vector<double> step_end_time;

  std::size_t length() const { return words.size(); }
  bool has_times() const { return !step_start_time.empty(); }

  static Stream concatenate(const Corpus& corpus);
};

struct WindowScore {
  std::size_t start_step = 0;
  std::size_t end_step = 0;  // exclusive
  double intensity = 0.0;    // signed model prediction for the window
};

// Scores windows at offsets 0, stride, 2*stride, ... in eval mode; the final
// partial window is included iff it spans at least window_len/2 steps.
std::vector<WindowScore> score_stream(const Stream& stream, const SentimentModel& model,
                                      const Vocabulary& vocab, std::size_t window_len,
                                      std::size_t stride);

struct HighlightSegment {
  std::size_t start_step = 0;
  std::size_t end_step = 0;  // exclusive
  std::optional<double> start_time;
  std::optional<double> end_time;
  double peak_score = 0.0;  // max window score inside the segment
  double mean_score = 0.0;  // mean window score inside the segment
};

struct ScoredWindow {
  std::size_t start_step = 0;
  std::size_t end_step = 0;
  double score = 0.0;
};

// Marks windows with score >= threshold, merges overlapping/adjacent marked
// windows, merges segments separated by fewer than min_gap steps, then drops
// segments shorter than min_len steps. Output is sorted and disjoint.
std::vector<HighlightSegment> segment(std::span<const ScoredWindow> windows,
                                      double threshold, std::size_t min_gap,
                                      std::size_t min_len);

// Attaches interpolated timestamps from the stream, in place.
void attach_times(std::vector<HighlightSegment>& segments, const Stream& stream);

// Threshold below which a fraction q of the scores falls (nearest-rank on the
// sorted scores); q in [0, 1].
double quantile_threshold(std::vector<double> scores, double q);

std::string segments_to_json(const std::vector<HighlightSegment>& segments);
std::string segments_to_csv(const std::vector<HighlightSegment>& segments);

}  // namespace magfuse
