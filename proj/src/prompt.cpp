#include "courseqa/prompt.hpp"

#include "courseqa/error.hpp"
#include "courseqa/text.hpp"

namespace courseqa::prompt {

namespace {

constexpr std::string_view kSystemText =
    "You are a helpful, respectful, and honest teaching assistant for an introductory programming course in Matlab "
    "and C. Your current task is to answer student queries on Piazza. Always answer as helpfully as possible, while "
    "being safe. Your answers should not include any harmful, unethical, racist, sexist, toxic, dangerous, or "
    "illegal content. Please ensure that your responses are socially unbiased and positive in nature. If a question "
    "does not make any sense, or is not factually coherent, explain why instead of answering something not correct. "
    "If you don't know the answer to a question, please don't share false information.";

constexpr std::string_view kRagLead =
    "Here are some snippets from the course material & other uploaded content which might be helpful to generate "
    "the response.";
constexpr std::string_view kRagClose = "Above were the snippets. Now, here is the query to be answered:";

constexpr std::string_view kSubjectOpen = "Query subject: ```";
constexpr std::string_view kBodyOpen = "```\nQuery body: ```";
constexpr std::string_view kPromptClose = "```\nPlease answer the query. [/INST]";

// U+2063 INVISIBLE SEPARATOR
constexpr std::string_view kSeparator = "\xE2\x81\xA3";

// Placeholders are substituted in one left-to-right pass, so text inside the
// substituted values is never re-expanded.
constexpr std::string_view kEvalTemplate = R"(
You will be given one answer to a question written by a student on a Question-Answer platform for a Computer Science undergraduate course. You will also have access to the ground truth answer given by a human teaching assistant. Your task is to rate the answer on one metric. Please make sure you read and understand these instructions very carefully. Please keep the ground truth answer given by the teaching assistant in mind while reviewing, and refer to it as needed.

Evaluation Criteria:

{criteria}

Evaluation Steps:

{steps}

Example:

Question:

{question}

Ground Truth Answer:

{GroundTruthAnswer}

Answer:

{answer}

Evaluation Form (scores ONLY):

- {metric_name}
)";

constexpr std::string_view kUsefulnessCriteria = R"(
Usefulness (0-2) -  judge whether a response would be useful to a Teaching Assistant in answering a student's question.

Here is the scale:
0 - A score of 0 means that the response is not useful at all. A Teaching Assistant would simply reject this answerbecause it is not a natural response, is irrelevant to the question, or is too verbose.
1 - A score of 1 means that the response is partially useful. A Teaching Assistant needs to edit this answer, but it still sounds natural and relevant so editing will not take long.
2 - A score of 2 means that the response is useful as is. A Teaching Assistant can use this response as is.
)";

constexpr std::string_view kUsefulnessSteps = R"(
1. Read the question carefully.
2. Read the response carefully.
2. Read the ground truth answer carefully.
3. Consider whether the response would be useful to a Teaching Assistant in answering a student's question.
4. Assign a usefulness score from 0 to 2.
)";

constexpr std::string_view kAccuracyCriteria = R"(
Accuracy (0-2) - determine whether this response provides a factually correct answer to the question.

Here is the scale:
0 - A score of 0 means that the response is completely inaccurate. The answer is entirely incorrect or provides false information.
1 - A score of 1 means that the response is partially accurate. The answer lacks some correct information or contains incorrect or unnecessary information.
2 - A score of 2 means that the response is accurate. The answer is completely accurate, providing correct information and a valid solution.
)";

constexpr std::string_view kAccuracySteps = R"(
1. Read the question carefully.
2. Read the response carefully.
3. Read the ground truth answer carefully.
4. Consider whether this response provides a factually correct answer to the question.
5. Assign an accuracy score from 0 to 2.
)";

std::string substitute(std::string_view tmpl, std::initializer_list<std::pair<std::string_view, std::string_view>> values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = tmpl.find('}', open);
    if (close == std::string_view::npos) break;
    const std::string_view name = tmpl.substr(open + 1, close - open - 1);
    out.append(tmpl.substr(pos, open - pos));
    bool found = false;
    for (const auto& [key, value] : values) {
      if (key == name) {
        out.append(value);
        found = true;
        break;
      }
    }
    if (!found) throw Error("template placeholder '" + std::string(name) + "' has no value", "template");
    pos = close + 1;
  }
  out.append(tmpl.substr(pos));
  return out;
}

}  // namespace

std::string_view default_system_text() { return kSystemText; }

std::string render_rag_block(const std::vector<std::string>& snippets) {
  if (snippets.empty()) throw Error("RAG block needs at least one snippet", "empty_context");
  std::string out(kRagLead);
  out += "\n\n";
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    out += "### Below is snippet " + std::to_string(i + 1) + ":\n";
    out += snippets[i];
    out += "\n\n";
  }
  out += kRagClose;
  return out;
}

std::string render_rag_block(const retrieval::RetrievedContext& context) {
  std::vector<std::string> snippets;
  snippets.reserve(context.size());
  for (const auto& item : context) snippets.push_back(item.chunk.text);
  return render_rag_block(snippets);
}

// A separator is inserted before a leading backtick and after any backtick
// that is followed by another backtick or ends the field. Separators already
// present in the input are doubled; inserted ones never touch another
// separator, so the mapping is reversible.
std::string escape_backticks(std::string_view field) {
  std::string out;
  out.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field.substr(i, kSeparator.size()) == kSeparator) {
      out += kSeparator;
      out += kSeparator;
      i += kSeparator.size() - 1;
      continue;
    }
    const bool tick = field[i] == '`';
    if (tick && i == 0) out += kSeparator;
    out.push_back(field[i]);
    if (tick && (i + 1 == field.size() || field[i + 1] == '`')) out += kSeparator;
  }
  return out;
}

std::string unescape_backticks(std::string_view field) {
  std::string out;
  out.reserve(field.size());
  std::size_t i = 0;
  while (i < field.size()) {
    if (field.substr(i, kSeparator.size()) == kSeparator) {
      i += kSeparator.size();
      if (field.substr(i, kSeparator.size()) == kSeparator) {
        out += kSeparator;
        i += kSeparator.size();
      }
      continue;
    }
    out.push_back(field[i++]);
  }
  return out;
}

PromptBundle render_chat_prompt(std::string_view system, const std::optional<std::string>& rag,
                                std::string_view subject, std::string_view body, ChatPromptOptions options) {
  if (subject.empty()) throw Error("query subject is empty", "invalid_argument");
  if (body.empty()) throw Error("query body is empty", "invalid_argument");
  PromptBundle bundle;
  bundle.system_text = std::string(system);
  bundle.rag_block = rag;
  bundle.query_subject = std::string(subject);
  bundle.query_body = std::string(body);

  std::string& out = bundle.rendered;
  if (options.emit_bos) out += "<s>";
  out += "[INST] <<SYS>>\n";
  out += system;
  out += " <</SYS>>\n";
  if (rag) {
    out += *rag;
    out += "\n";
  }
  out += kSubjectOpen;
  out += escape_backticks(subject);
  out += kBodyOpen;
  out += escape_backticks(body);
  out += kPromptClose;
  return bundle;
}

std::optional<QueryFields> extract_query_fields(std::string_view rendered) {
  const std::size_t subject_at = rendered.rfind(kSubjectOpen);
  if (subject_at == std::string_view::npos) return std::nullopt;
  if (rendered.size() < kPromptClose.size() ||
      rendered.substr(rendered.size() - kPromptClose.size()) != kPromptClose) {
    return std::nullopt;
  }
  const std::size_t subject_begin = subject_at + kSubjectOpen.size();
  const std::size_t body_sep = rendered.find(kBodyOpen, subject_begin);
  if (body_sep == std::string_view::npos) return std::nullopt;
  const std::size_t body_begin = body_sep + kBodyOpen.size();
  const std::size_t body_end = rendered.size() - kPromptClose.size();
  if (body_end < body_begin) return std::nullopt;
  return QueryFields{unescape_backticks(rendered.substr(subject_begin, body_sep - subject_begin)),
                     unescape_backticks(rendered.substr(body_begin, body_end - body_begin))};
}

std::string_view metric_name(Metric metric) {
  return metric == Metric::usefulness ? "Usefulness" : "Accuracy";
}

std::string render_eval_prompt(Metric metric, std::string_view question, std::string_view ground_truth,
                               std::string_view answer) {
  if (question.empty() || ground_truth.empty() || answer.empty()) {
    throw Error("evaluation prompt needs non-empty question, ground truth, and answer", "invalid_argument");
  }
  const bool useful = metric == Metric::usefulness;
  return substitute(kEvalTemplate, {{"criteria", useful ? kUsefulnessCriteria : kAccuracyCriteria},
                                    {"steps", useful ? kUsefulnessSteps : kAccuracySteps},
                                    {"question", question},
                                    {"GroundTruthAnswer", ground_truth},
                                    {"answer", answer},
                                    {"metric_name", metric_name(metric)}});
}

}  // namespace courseqa::prompt
