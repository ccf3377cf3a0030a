// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vcdesk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "vcdesk/wav.hpp"

namespace vcdesk::eval {

using nlohmann::json;

double AlignmentReport::rate_percent() const {
  Require(reference_length > 0, "error rate undefined for empty reference");
  return 100.0 * distance() / static_cast<double>(reference_length);
}

AlignmentReport EditDistance(const std::vector<std::string>& ref,
                             const std::vector<std::string>& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int ins = d[i][j - 1] + 1;
      const int del = d[i - 1][j] + 1;
      d[i][j] = std::min({sub, ins, del});
    }
  }
  AlignmentReport rep;
  rep.reference_length = static_cast<int64_t>(n);
  // Backtrace, ties preferring substitution over insertion over deletion.
  size_t i = n, j = m;
  std::vector<std::pair<std::string, std::string>> rev;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++rep.substitutions;
      rev.emplace_back(ref[i - 1], hyp[j - 1]);
      --i;
      --j;
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      ++rep.insertions;
      rev.emplace_back("", hyp[j - 1]);
      --j;
    } else {
      ++rep.deletions;
      rev.emplace_back(ref[i - 1], "");
      --i;
    }
  }
  rep.pairs.assign(rev.rbegin(), rev.rend());
  return rep;
}

namespace {

std::vector<std::string> SplitUnits(const std::string& text, ErrorUnit unit) {
  std::vector<std::string> out;
  if (unit == ErrorUnit::kWord) {
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(w);
  } else {
    for (char c : text) {
      if (!std::isspace(static_cast<unsigned char>(c))) out.emplace_back(1, c);
    }
  }
  return out;
}

}  // namespace

double CerWer(const std::string& ref_text, const std::string& hyp_text,
              ErrorUnit unit) {
  const std::vector<std::string> ref = SplitUnits(ref_text, unit);
  Require(!ref.empty(), "cer/wer: empty reference");
  const std::vector<std::string> hyp = SplitUnits(hyp_text, unit);
  return EditDistance(ref, hyp).rate_percent();
}

// ---- intelligibility ----

IntelligibilityReport IntelligibilityFromItems(
    const std::vector<ConvertedItem>& items, const asr::Recognizer& recognizer,
    const asr::DecodeConfig& dcfg, const asr::NGramLm* lm) {
  struct Acc {
    double input_cer = 0, input_wer = 0, conv_cer = 0, conv_wer = 0;
    int64_t n = 0, missing = 0;
  };
  std::map<std::string, Acc> by_speaker;
  auto hyp_of = [&](const std::string& path) {
    asr::RecognitionResult res = recognizer.Recognize(ReadWav(path), dcfg, lm);
    std::string joined;
    for (size_t i = 0; i < res.tokens.symbols.size(); ++i) {
      if (i) joined += ' ';
      joined += res.tokens.symbols[i];
    }
    return joined;
  };
  for (const auto& item : items) {
    Acc& acc = by_speaker[item.source_speaker];
    if (!std::filesystem::exists(item.source_audio_path) ||
        !std::filesystem::exists(item.converted_audio_path)) {
      ++acc.missing;
      continue;
    }
    const std::string input_hyp = hyp_of(item.source_audio_path);
    const std::string conv_hyp = hyp_of(item.converted_audio_path);
    acc.input_cer += CerWer(item.reference_tokens, input_hyp, ErrorUnit::kChar);
    acc.input_wer += CerWer(item.reference_tokens, input_hyp, ErrorUnit::kWord);
    acc.conv_cer += CerWer(item.reference_tokens, conv_hyp, ErrorUnit::kChar);
    acc.conv_wer += CerWer(item.reference_tokens, conv_hyp, ErrorUnit::kWord);
    ++acc.n;
  }
  IntelligibilityReport report;
  double sum_in = 0.0, sum_conv = 0.0;
  int64_t rows_counted = 0;
  for (const auto& [spk, acc] : by_speaker) {
    IntelligibilityRow row;
    row.source_speaker = spk;
    row.utterances = acc.n;
    row.missing = acc.missing;
    if (acc.n > 0) {
      row.input_cer = acc.input_cer / acc.n;
      row.input_wer = acc.input_wer / acc.n;
      row.converted_cer = acc.conv_cer / acc.n;
      row.converted_wer = acc.conv_wer / acc.n;
      sum_in += row.input_cer;
      sum_conv += row.converted_cer;
      ++rows_counted;
    }
    report.rows.push_back(row);
  }
  if (rows_counted > 0) {
    report.mean_input_cer = sum_in / rows_counted;
    report.mean_converted_cer = sum_conv / rows_counted;
  }
  return report;
}

std::string IntelligibilityReport::ToText() const {
  std::ostringstream os;
  os << "source     input CER  input WER   conv CER   conv WER  utts  missing\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-9s %10.2f %10.2f %10.2f %10.2f %5lld %8lld\n",
                  r.source_speaker.c_str(), r.input_cer, r.input_wer,
                  r.converted_cer, r.converted_wer,
                  static_cast<long long>(r.utterances),
                  static_cast<long long>(r.missing));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean input CER %.2f  mean converted CER %.2f\n",
                mean_input_cer, mean_converted_cer);
  os << buf;
  return os.str();
}

std::string IntelligibilityReport::ToJson() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"source_speaker", r.source_speaker},
                         {"input_cer", r.input_cer},
                         {"input_wer", r.input_wer},
                         {"converted_cer", r.converted_cer},
                         {"converted_wer", r.converted_wer},
                         {"utterances", r.utterances},
                         {"missing", r.missing}});
  }
  json j;
  j["rows"] = rows_json;
  j["mean_input_cer"] = mean_input_cer;
  j["mean_converted_cer"] = mean_converted_cer;
  return j.dump(2);
}

// ---- conversion similarity ----

SimilarityReport ConversionSimilarity(const std::vector<Waveform>& converted,
                                      const std::vector<Waveform>& target_enroll,
                                      const std::vector<Waveform>& source_enroll,
                                      const spkemb::SpkembScorer& scorer) {
  Require(!converted.empty(), "conversion_similarity: no converted utterances");
  Require(!target_enroll.empty() && !source_enroll.empty(),
          "conversion_similarity: empty enrollment set");
  const std::vector<float> target_centroid =
      spkemb::ExtractEmbedding(target_enroll, scorer).vector;
  const std::vector<float> source_centroid =
      spkemb::ExtractEmbedding(source_enroll, scorer).vector;
  SimilarityReport rep;
  rep.count = static_cast<int64_t>(converted.size());
  int64_t closer = 0;
  for (const auto& w : converted) {
    const std::vector<float> e = scorer.EmbedWaveform(w);
    const double ct = spkemb::Similarity(e, target_centroid);
    const double cs = spkemb::Similarity(e, source_centroid);
    rep.mean_cosine_to_target += ct;
    rep.mean_cosine_to_source += cs;
    if (ct > cs) ++closer;
  }
  rep.mean_cosine_to_target /= static_cast<double>(rep.count);
  rep.mean_cosine_to_source /= static_cast<double>(rep.count);
  rep.percent_closer_to_target = 100.0 * closer / static_cast<double>(rep.count);
  return rep;
}

std::string SimilarityReport::ToText() const {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "closer-to-target %.1f%% of %lld  mean cos(target) %.4f  "
                "mean cos(source) %.4f\n",
                percent_closer_to_target, static_cast<long long>(count),
                mean_cosine_to_target, mean_cosine_to_source);
  os << buf;
  return os.str();
}

std::string SimilarityReport::ToJson() const {
  json j;
  j["percent_closer_to_target"] = percent_closer_to_target;
  j["mean_cosine_to_target"] = mean_cosine_to_target;
  j["mean_cosine_to_source"] = mean_cosine_to_source;
  j["count"] = count;
  return j.dump(2);
}

// ---- ratings ----

RatingsTable LoadRatingsCsv(const std::string& path, double scale_min,
                            double scale_max) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open ratings csv: " + path);
  RatingsTable table;
  table.scale_min = scale_min;
  table.scale_max = scale_max;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      Require(line == "system_id,listener_id,utt_id,score",
              "ratings csv: bad header '" + line + "'");
      continue;
    }
    std::istringstream is(line);
    RatingRow row;
    std::string score_text;
    if (!std::getline(is, row.system_id, ',') ||
        !std::getline(is, row.listener_id, ',') ||
        !std::getline(is, row.utt_id, ',') || !std::getline(is, score_text)) {
      throw ValidationError("ratings csv line " + std::to_string(line_no) +
                            ": expected 4 comma-separated fields");
    }
    try {
      row.score = std::stod(score_text);
    } catch (const std::exception&) {
      throw ValidationError("ratings csv line " + std::to_string(line_no) +
                            ": bad score '" + score_text + "'");
    }
    if (row.score < scale_min || row.score > scale_max) {
      throw ValidationError("ratings csv line " + std::to_string(line_no) +
                            ": score " + score_text + " outside scale [" +
                            std::to_string(scale_min) + ", " +
                            std::to_string(scale_max) + "]");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<SystemAggregate> AggregateRatings(const RatingsTable& table) {
  Require(!table.rows.empty(), "aggregate: no rating rows");
  std::map<std::string, std::vector<double>> by_system;
  for (const auto& r : table.rows) {
    Require(r.score >= table.scale_min && r.score <= table.scale_max,
            "aggregate: score outside scale for system " + r.system_id);
    by_system[r.system_id].push_back(r.score);
  }
  std::vector<SystemAggregate> out;
  for (const auto& [sys, scores] : by_system) {
    SystemAggregate agg;
    agg.system_id = sys;
    agg.count = static_cast<int64_t>(scores.size());
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    agg.mean = mean;
    if (scores.size() > 1) {
      double var = 0.0;
      for (double s : scores) var += (s - mean) * (s - mean);
      var /= static_cast<double>(scores.size() - 1);
      agg.ci95_half = 1.96 * std::sqrt(var / static_cast<double>(scores.size()));
    }
    out.push_back(agg);
  }
  return out;  // std::map iteration is already ordered by system_id
}

std::string RenderAggregatesText(const std::vector<SystemAggregate>& aggs) {
  std::ostringstream os;
  os << "system          n    mean   95% CI\n";
  char buf[120];
  for (const auto& a : aggs) {
    std::snprintf(buf, sizeof(buf), "%-12s %4lld  %6.3f  +/-%.3f\n",
                  a.system_id.c_str(), static_cast<long long>(a.count), a.mean,
                  a.ci95_half);
    os << buf;
  }
  return os.str();
}

std::string RenderAggregatesJson(const std::vector<SystemAggregate>& aggs) {
  json arr = json::array();
  for (const auto& a : aggs) {
    arr.push_back({{"system_id", a.system_id},
                   {"count", a.count},
                   {"mean", a.mean},
                   {"ci95_half", a.ci95_half}});
  }
  return arr.dump(2);
}

}  // namespace vcdesk::eval
