#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsssqs/bytes.hpp"
#include "bsssqs/crypto.hpp"

namespace bsssqs {

using Json = nlohmann::json;

struct Question {
    std::string id;
    std::string course_id;
    std::string body;
    int weight = 0;

    bool operator==(const Question&) const = default;
};

// One exam paper: an ordered set of questions treated as a single
// encrypt-and-distribute unit.
struct QuestionPaper {
    std::size_t index = 0;
    std::string course_id;
    std::vector<Question> questions;

    bool operator==(const QuestionPaper&) const = default;
};

struct QuestionSubmission {
    std::string setter_qt;
    std::vector<Question> questions;

    bool operator==(const QuestionSubmission&) const = default;
};

inline void to_json(Json& j, const Question& q)
{
    j = Json{{"id", q.id}, {"course_id", q.course_id}, {"body", q.body}, {"weight", q.weight}};
}

inline void from_json(const Json& j, Question& q)
{
    j.at("id").get_to(q.id);
    j.at("course_id").get_to(q.course_id);
    j.at("body").get_to(q.body);
    j.at("weight").get_to(q.weight);
}

inline void to_json(Json& j, const QuestionPaper& p)
{
    j = Json{{"index", p.index}, {"course_id", p.course_id}, {"questions", p.questions}};
}

inline void from_json(const Json& j, QuestionPaper& p)
{
    j.at("index").get_to(p.index);
    j.at("course_id").get_to(p.course_id);
    j.at("questions").get_to(p.questions);
}

inline void to_json(Json& j, const QuestionSubmission& s)
{
    j = Json{{"setter_qt", s.setter_qt}, {"questions", s.questions}};
}

inline void from_json(const Json& j, QuestionSubmission& s)
{
    j.at("setter_qt").get_to(s.setter_qt);
    j.at("questions").get_to(s.questions);
}

// Canonical bytes: compact JSON with lexicographically sorted keys (the
// library's object representation already sorts), UTF-8.
template <typename T>
Bytes canonical_bytes(const T& value)
{
    Json j = value;
    return to_bytes(j.dump());
}

template <typename T>
T parse_canonical(ByteView bytes)
{
    try {
        return Json::parse(to_string(bytes)).get<T>();
    } catch (const Json::exception& e) {
        throw Error(std::string("malformed payload: ") + e.what());
    }
}

inline Hash256 digest_of(const QuestionPaper& p)
{
    return sha256(canonical_bytes(p));
}

} // namespace bsssqs
