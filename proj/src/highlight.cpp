#include "magfuse/highlight.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace magfuse {

Stream Stream::concatenate(const Corpus& corpus) {
  Stream s;
  bool all_timed = true;
  for (const auto& inst : corpus.instances)
    if (!inst.start_time) all_timed = false;
  for (const auto& inst : corpus.instances) {
    const std::size_t L = inst.words.size();
    for (std::size_t i = 0; i < L; ++i) {
      s.words.push_back(inst.words[i]);
      s.visual.push_back(inst.visual[i]);
      s.acoustic.push_back(inst.acoustic[i]);
      if (all_timed) {
        const double span = *inst.end_time - *inst.start_time;
        const double step = span / static_cast<double>(L);
        s.step_start_time.push_back(*inst.start_time + step * static_cast<double>(i));
        s.step_end_time.push_back(*inst.start_time + step * static_cast<double>(i + 1));
      }
    }
  }
  return s;
}

namespace {

EncodedInstance window_instance(const Stream& stream, const Vocabulary& vocab,
                                std::size_t start, std::size_t end) {
  EncodedInstance enc;
  const std::size_t L = end - start;
  enc.token_ids.reserve(L);
  for (std::size_t i = start; i < end; ++i)
    enc.token_ids.push_back(vocab.id_of(stream.words[i]));
  const std::size_t dv = stream.visual[start].size();
  const std::size_t da = stream.acoustic[start].size();
  std::vector<double> vis(L * dv), aco(L * da);
  for (std::size_t i = 0; i < L; ++i) {
    std::copy(stream.visual[start + i].begin(), stream.visual[start + i].end(),
              vis.begin() + i * dv);
    std::copy(stream.acoustic[start + i].begin(), stream.acoustic[start + i].end(),
              aco.begin() + i * da);
  }
  enc.visual = Tensor::from_data({L, dv}, std::move(vis));
  enc.acoustic = Tensor::from_data({L, da}, std::move(aco));
  enc.mask.assign(L, true);
  return enc;
}

}  // namespace

std::vector<WindowScore> score_stream(const Stream& stream, const SentimentModel& model,
                                      const Vocabulary& vocab, std::size_t window_len,
                                      std::size_t stride) {
  if (window_len < 1) throw ConfigError("score_stream: window_len must be >= 1");
  if (stride < 1) throw ConfigError("score_stream: stride must be >= 1");
  const std::size_t n = stream.length();
  if (2 * n < window_len)
    throw DataError("score_stream: stream of " + std::to_string(n) +
                    " steps is shorter than half the window (" +
                    std::to_string(window_len) + ")");

  std::vector<WindowScore> out;
  std::size_t offset = 0;
  for (; offset + window_len <= n; offset += stride) {
    WindowScore ws{offset, offset + window_len, 0.0};
    ws.intensity = model.predict(window_instance(stream, vocab, ws.start_step, ws.end_step))
                       .intensity;
    out.push_back(ws);
  }
  // Final partial window, included iff it covers at least window_len/2 steps.
  if (offset < n && 2 * (n - offset) >= window_len) {
    WindowScore ws{offset, n, 0.0};
    ws.intensity = model.predict(window_instance(stream, vocab, ws.start_step, ws.end_step))
                       .intensity;
    out.push_back(ws);
  }
  return out;
}

std::vector<HighlightSegment> segment(std::span<const ScoredWindow> windows,
                                      double threshold, std::size_t min_gap,
                                      std::size_t min_len) {
  struct Group {
    std::size_t start, end;
    std::vector<double> scores;
  };
  std::vector<Group> groups;
  for (const auto& w : windows) {
    if (w.score < threshold) continue;
    if (!groups.empty() && w.start_step <= groups.back().end) {
      groups.back().end = std::max(groups.back().end, w.end_step);
      groups.back().scores.push_back(w.score);
    } else {
      groups.push_back({w.start_step, w.end_step, {w.score}});
    }
  }
  // Merge groups separated by fewer than min_gap steps.
  std::vector<Group> merged;
  for (auto& grp : groups) {
    if (!merged.empty() && grp.start - merged.back().end < min_gap) {
      merged.back().end = grp.end;
      merged.back().scores.insert(merged.back().scores.end(), grp.scores.begin(),
                                  grp.scores.end());
    } else {
      merged.push_back(std::move(grp));
    }
  }
  std::vector<HighlightSegment> out;
  for (const auto& grp : merged) {
    if (grp.end - grp.start < min_len) continue;
    HighlightSegment seg;
    seg.start_step = grp.start;
    seg.end_step = grp.end;
    seg.peak_score = *std::max_element(grp.scores.begin(), grp.scores.end());
    seg.mean_score = 0.0;
    for (double s : grp.scores) seg.mean_score += s;
    seg.mean_score /= static_cast<double>(grp.scores.size());
    out.push_back(seg);
  }
  return out;
}

void attach_times(std::vector<HighlightSegment>& segments, const Stream& stream) {
  if (!stream.has_times()) return;
  for (auto& seg : segments) {
    seg.start_time = stream.step_start_time[seg.start_step];
    seg.end_time = stream.step_end_time[seg.end_step - 1];
  }
}

double quantile_threshold(std::vector<double> scores, double q) {
  if (scores.empty()) throw DataError("quantile_threshold: no scores");
  if (q < 0.0 || q > 1.0) throw ConfigError("quantile_threshold: q must be in [0, 1]");
  std::sort(scores.begin(), scores.end());
  const std::size_t idx = static_cast<std::size_t>(
      q * static_cast<double>(scores.size() - 1));
  return scores[idx];
}

std::string segments_to_json(const std::vector<HighlightSegment>& segments) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& seg : segments) {
    nlohmann::json j;
    j["start_step"] = seg.start_step;
    j["end_step"] = seg.end_step;
    if (seg.start_time) j["start_time"] = *seg.start_time;
    if (seg.end_time) j["end_time"] = *seg.end_time;
    j["peak_score"] = seg.peak_score;
    j["mean_score"] = seg.mean_score;
    arr.push_back(j);
  }
  return arr.dump(2);
}

std::string segments_to_csv(const std::vector<HighlightSegment>& segments) {
  std::ostringstream oss;
  oss.precision(17);
  oss << "start_step,end_step,start_time,end_time,peak_score,mean_score\n";
  for (const auto& seg : segments) {
    oss << seg.start_step << "," << seg.end_step << ",";
    if (seg.start_time) oss << *seg.start_time;
    oss << ",";
    if (seg.end_time) oss << *seg.end_time;
    oss << "," << seg.peak_score << "," << seg.mean_score << "\n";
  }
  return oss.str();
}

}  // namespace magfuse
