// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_EVAL_HPP_
#define VCDESK_EVAL_HPP_

#include <string>
#include <vector>

#include "vcdesk/asr.hpp"
#include "vcdesk/spkemb.hpp"

namespace vcdesk::eval {

struct AlignmentReport {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int64_t reference_length = 0;
  // (ref, hyp) pairs; "" marks the empty side of an insertion/deletion.
  std::vector<std::pair<std::string, std::string>> pairs;

  int distance() const { return substitutions + deletions + insertions; }
  double rate_percent() const;
};

// Levenshtein with unit costs. Backtrace ties prefer substitution over
// insertion over deletion.
AlignmentReport EditDistance(const std::vector<std::string>& ref,
                             const std::vector<std::string>& hyp);

enum class ErrorUnit { kChar, kWord };

// Edit distance at the chosen unit / reference length * 100. Char units are
// the non-whitespace characters; word units are whitespace-separated.
double CerWer(const std::string& ref_text, const std::string& hyp_text,
              ErrorUnit unit);

// ---- intelligibility ----

struct ConvertedItem {
  std::string source_speaker;
  std::string reference_tokens;     // space-separated
  std::string source_audio_path;    // original input speech
  std::string converted_audio_path; // cascade output
};

struct IntelligibilityRow {
  std::string source_speaker;
  double input_cer = 0.0;
  double input_wer = 0.0;
  double converted_cer = 0.0;
  double converted_wer = 0.0;
  int64_t utterances = 0;
  int64_t missing = 0;  // rows skipped for absent audio
};

struct IntelligibilityReport {
  std::vector<IntelligibilityRow> rows;
  double mean_input_cer = 0.0;
  double mean_converted_cer = 0.0;

  std::string ToText() const;
  std::string ToJson() const;
};

IntelligibilityReport IntelligibilityFromItems(
    const std::vector<ConvertedItem>& items, const asr::Recognizer& recognizer,
    const asr::DecodeConfig& dcfg, const asr::NGramLm* lm = nullptr);

// ---- conversion similarity ----

struct SimilarityReport {
  double percent_closer_to_target = 0.0;
  double mean_cosine_to_target = 0.0;
  double mean_cosine_to_source = 0.0;
  int64_t count = 0;

  std::string ToText() const;
  std::string ToJson() const;
};

// Compares each converted utterance's embedding against the target and
// source enrollment centroids.
SimilarityReport ConversionSimilarity(const std::vector<Waveform>& converted,
                                      const std::vector<Waveform>& target_enroll,
                                      const std::vector<Waveform>& source_enroll,
                                      const spkemb::SpkembScorer& scorer);

// ---- ratings aggregation ----

struct RatingRow {
  std::string system_id;
  std::string listener_id;
  std::string utt_id;
  double score = 0.0;
};

struct RatingsTable {
  std::vector<RatingRow> rows;
  double scale_min = 1.0;
  double scale_max = 5.0;
};

// CSV with header system_id,listener_id,utt_id,score. An out-of-scale score
// is rejected with its line number.
RatingsTable LoadRatingsCsv(const std::string& path, double scale_min,
                            double scale_max);

struct SystemAggregate {
  std::string system_id;
  int64_t count = 0;
  double mean = 0.0;
  double ci95_half = 0.0;  // normal-approximation half width
};

// Per-system mean + 95% CI, ordered by system_id.
std::vector<SystemAggregate> AggregateRatings(const RatingsTable& table);

std::string RenderAggregatesText(const std::vector<SystemAggregate>& aggs);
std::string RenderAggregatesJson(const std::vector<SystemAggregate>& aggs);

}  // namespace vcdesk::eval

#endif  // VCDESK_EVAL_HPP_
