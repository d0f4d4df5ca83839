#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "epistwin/transduction.hpp"
#include "epistwin/util.hpp"
#include "test_support.hpp"

using namespace epistwin;
using test_support::TempDir;
using test_support::fixture_path;

namespace {

SchemaRegistry shipped_registry() {
    return SchemaRegistry::from_file(fixture_path("registry.json"));
}

InformationObject parse_object(const std::string& record, const std::string& base) {
    return parse_information_object(record, shipped_registry(), base);
}

Transducer rule_transducer(const SchemaRegistry& registry,
                           ModelGateway* gateway = nullptr) {
    return Transducer(registry, PromptSet::builtin(), gateway,
                      ExtractorBackend::Rule);
}

}  // namespace

TEST_CASE("relation names fold to snake_case with a length cap") {
    std::vector<std::string> warnings;
    CHECK(normalize_relation("Works At!", &warnings) == "works_at");
    CHECK(normalize_relation("  located---in ", &warnings) == "located_in");
    CHECK(normalize_relation("isAt", &warnings) == "isat");
    CHECK(normalize_relation("captured_with", &warnings) == "captured_with");
    CHECK(warnings.empty());

    std::string longname(80, 'x');
    std::string capped = normalize_relation(longname, &warnings);
    CHECK(capped.size() == 64);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("truncated") != std::string::npos);
}

TEST_CASE("metadata lifts to exactly one triple per entry") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);

    auto photo = parse_object(
        R"({"id":"ph-01","source":"Photos","metadata":{"time":"10:05","date":"2025-06-12"}})",
        ".");
    Fragment fragment = t.lift_metadata(photo);
    REQUIRE(fragment.triples.size() == photo.metadata.size());
    REQUIRE(fragment.triples.size() == 2);

    bool saw_time = false, saw_date = false;
    for (const auto& triple : fragment.triples) {
        CHECK(triple.head.kind == NodeKind::InfoObject);
        CHECK(triple.head.label == "ph-01");
        CHECK(triple.origin == TripleOrigin::Metadata);
        CHECK(triple.provenance == std::set<std::string>{"ph-01"});
        if (triple.relation == "captured_time") {
            saw_time = true;
            CHECK(triple.tail.kind == NodeKind::Literal);
            CHECK(triple.tail.label == "10:05");
        }
        if (triple.relation == "captured_date") {
            saw_date = true;
            CHECK(triple.tail.kind == NodeKind::Literal);
            CHECK(triple.tail.label == "2025-06-12");
        }
    }
    CHECK(saw_time);
    CHECK(saw_date);
}

TEST_CASE("entity casts produce entity tails, not literals") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);
    auto contact = parse_object(
        R"({"id":"ct-01","source":"Contacts","metadata":{"name":"Sarah Green"}})", ".");
    Fragment fragment = t.lift_metadata(contact);
    REQUIRE(fragment.triples.size() == 1);
    CHECK(fragment.triples[0].relation == "named");
    CHECK(fragment.triples[0].tail.kind == NodeKind::Entity);
    CHECK(fragment.triples[0].tail.label == "Sarah Green");
    CHECK(fragment.triples[0].tail.type_tag == "Person");
}

TEST_CASE("empty metadata lifts to an empty fragment") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);
    auto note = parse_object(R"({"id":"n-01","source":"Note","metadata":{}})", ".");
    CHECK(t.lift_metadata(note).triples.empty());
}

TEST_CASE("timestamp casts become canonical timestamp literals") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);
    auto note = parse_object(
        R"({"id":"n-02","source":"Note","metadata":{"created":"2025-03-04T09:30Z"}})",
        ".");
    Fragment fragment = t.lift_metadata(note);
    REQUIRE(fragment.triples.size() == 1);
    CHECK(fragment.triples[0].relation == "created_at");
    CHECK(fragment.triples[0].tail.kind == NodeKind::Literal);
    CHECK(fragment.triples[0].tail.label == "2025-03-04T09:30Z");
    CHECK(fragment.triples[0].tail.type_tag == "timestamp");
}

TEST_CASE("text payloads normalize to themselves") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);
    auto note = parse_object(
        R"({"id":"n-03","source":"Note","metadata":{},"payload":{"kind":"text","text":"Buy milk"}})",
        ".");
    CHECK(t.normalize_content(note) == "Buy milk");
}

TEST_CASE("image payloads caption through the gateway") {
    TempDir dir;
    dir.write("shot.png", "Sagrada Familia facade with construction cranes.\n");
    SchemaRegistry registry = shipped_registry();
    StubGateway gateway;
    Transducer t = rule_transducer(registry, &gateway);

    auto photo = parse_object(
        R"({"id":"ph-02","source":"Photos","metadata":{},"payload":{"kind":"image","path":"shot.png"}})",
        dir.path().string());
    CHECK(t.normalize_content(photo) ==
          "Sagrada Familia facade with construction cranes.");

    Transducer offline = rule_transducer(registry);
    try {
        (void)offline.caption(photo);
        FAIL("expected an error");
    } catch (const EtError& e) {
        CHECK(e.kind() == ErrorKind::ExtractionUnavailable);
    }

    InformationObject ghost = photo;
    ghost.payload->path = dir.file("gone.png");
    try {
        (void)t.caption(ghost);
        FAIL("expected an error");
    } catch (const EtError& e) {
        CHECK(e.kind() == ErrorKind::GatewayError);
        CHECK(std::string(e.what()).find("not found") != std::string::npos);
    }
}

TEST_CASE("rule extraction parses the controlled statement grammar") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);

    auto one = t.extract_triples("Sagrada Familia | located_in | Barcelona.",
                                 Source::Note);
    REQUIRE(one.triples.size() == 1);
    CHECK(one.triples[0].head == "Sagrada Familia");
    CHECK(one.triples[0].relation == "located_in");
    CHECK(one.triples[0].tail == "Barcelona");
    CHECK(one.triples[0].head_tag == "Entity");
    CHECK(one.warnings.empty());

    CHECK(t.extract_triples("", Source::Note).triples.empty());
    CHECK(t.extract_triples("  \n \n", Source::Note).triples.empty());

    auto tagged = t.extract_triples(
        "Sarah Green:Person | works_at | Sant Pau Hospital:Place.\n"
        "Alarm | rings_at | 07:30.\n",
        Source::Note);
    REQUIRE(tagged.triples.size() == 2);
    CHECK(tagged.triples[0].head == "Sarah Green");
    CHECK(tagged.triples[0].head_tag == "Person");
    CHECK(tagged.triples[0].tail == "Sant Pau Hospital");
    CHECK(tagged.triples[0].tail_tag == "Place");
    CHECK(tagged.triples[1].tail == "07:30");
    CHECK(tagged.triples[1].tail_tag == "Entity");

    auto messy = t.extract_triples(
        "Good | statement | here.\n"
        "No terminal period\n"
        "Too | many | parts | here.\n"
        "Another | good | one.\n",
        Source::Note);
    CHECK(messy.triples.size() == 2);
    CHECK(messy.warnings.size() == 2);
}

TEST_CASE("llm extraction parses tab triples up to the terminator") {
    SchemaRegistry registry = shipped_registry();
    StubGateway gateway;
    PromptSet prompts = PromptSet::builtin();
    Transducer t(registry, prompts, &gateway, ExtractorBackend::Llm);

    const std::string text = "A day around the cathedral.";
    GatewayRequest expected;
    expected.role = GatewayRole::Extractor;
    expected.prompt = render_template(
        prompts.extraction(), {{"content", text}, {"source", "Note"}});
    gateway.add_script(expected.digest(),
                       "Sagrada Familia\tlocated in\tBarcelona\n"
                       "malformed line\n"
                       "Park Guell\tDesigned By\tAntoni Gaudi\n"
                       "###END###\n"
                       "trailing noise\tnever\tparsed\n");

    auto set = t.extract_triples(text, Source::Note);
    REQUIRE(set.triples.size() == 2);
    CHECK(set.triples[0].head == "Sagrada Familia");
    CHECK(set.triples[0].relation == "located_in");
    CHECK(set.triples[0].tail == "Barcelona");
    CHECK(set.triples[1].relation == "designed_by");
    REQUIRE(set.warnings.size() == 1);
    CHECK(set.warnings[0].find("malformed line") != std::string::npos);

    Transducer offline(registry, prompts, nullptr, ExtractorBackend::Llm);
    try {
        (void)offline.extract_triples(text, Source::Note);
        FAIL("expected an error");
    } catch (const EtError& e) {
        CHECK(e.kind() == ErrorKind::ExtractionUnavailable);
    }
}

TEST_CASE("content graphs carry extraction triples plus mention links") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);

    auto note = parse_object(
        R"({"id":"n-04","source":"Note","metadata":{},"payload":{"kind":"text","text":"Sarah Green:Person | works_at | Hospital:Place."}})",
        ".");
    Fragment fragment = t.content_graph(note);
    REQUIRE(fragment.triples.size() == 2);
    CHECK(fragment.triples[0].head.label == "Sarah Green");
    CHECK(fragment.triples[0].relation == "works_at");
    CHECK(fragment.triples[1].head.kind == NodeKind::InfoObject);
    CHECK(fragment.triples[1].relation == "mentions");
    CHECK(fragment.triples[1].tail.label == "Sarah Green");
    for (const auto& triple : fragment.triples) {
        CHECK(triple.origin == TripleOrigin::Content);
        CHECK(triple.provenance == std::set<std::string>{"n-04"});
    }

    auto blank = parse_object(
        R"({"id":"n-05","source":"Note","metadata":{},"payload":{"kind":"text","text":""}})",
        ".");
    CHECK(t.content_graph(blank).triples.empty());

    auto multi = parse_object(
        R"({"id":"n-06","source":"Note","metadata":{},"payload":{"kind":"text","text":"A | r1 | B.\nA | r2 | C.\nD | r3 | E."}})",
        ".");
    Fragment big = t.content_graph(multi);
    std::size_t content = 0, mentions = 0;
    for (const auto& triple : big.triples) {
        if (triple.relation == "mentions")
            ++mentions;
        else
            ++content;
    }
    CHECK(content == 3);
    CHECK(mentions == 2);
}

TEST_CASE("applying an object anchors it with metadata and content") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);

    Pkg g = Pkg::create("alex");
    auto alarm = parse_object(
        R"({"id":"al-01","source":"Alarm","metadata":{"time":"06:45","label":"Gym"}})",
        ".");
    MergeStats stats = t.apply_update(g, alarm);
    CHECK(stats.triples_added == 3);

    AuditReport audit = g.audit();
    CHECK(audit.reachability_violations == 0);
    CHECK(audit.problems.empty());
    CHECK(g.knows_object("al-01"));

    std::string dump = g.canonical_dump();
    CHECK(dump.find("owns") != std::string::npos);
    CHECK(dump.find("rings_at") != std::string::npos);
    CHECK(dump.find("labeled") != std::string::npos);
    CHECK(dump.find("mentions") == std::string::npos);
}

TEST_CASE("object nodes mirror their metadata as attributes") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);
    auto event = parse_object(
        R"({"id":"cal-01","source":"Calendar","metadata":{"title":"Dentist","date":"2025-08-20","attendee":["Sarah Green","Marc Vila"]}})",
        ".");
    NodeDescriptor node = t.object_descriptor(event);
    CHECK(node.kind == NodeKind::InfoObject);
    CHECK(node.attrs.at("source") == "Calendar");
    CHECK(node.attrs.at("payload") == "none");
    CHECK(node.attrs.at("title") == "Dentist");
    CHECK(node.attrs.at("date") == "2025-08-20");
    CHECK(node.attrs.at("attendee") == "Sarah Green; Marc Vila");
}

TEST_CASE("re-applying an object changes nothing in the canonical dump") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);
    Pkg g = Pkg::create("alex");
    auto note = parse_object(
        R"({"id":"n-07","source":"Note","metadata":{"title":"Trip"},"payload":{"kind":"text","text":"Sagrada Familia | located_in | Barcelona."}})",
        ".");
    t.apply_update(g, note);
    std::string before = g.canonical_dump();
    MergeStats again = t.apply_update(g, note);
    CHECK(again.nodes_added == 0);
    CHECK(again.triples_added == 0);
    CHECK(g.canonical_dump() == before);
}

TEST_CASE("building from a knowledge file is deterministic end to end") {
    TempDir dir;
    dir.write("shot.png", "Montjuic castle above the harbor.\n");
    std::string lines =
        std::string(R"({"owner":"alex","t_global":"2025-09-01T13:00Z"})") + "\n" +
        R"({"id":"cal-01","source":"Calendar","metadata":{"title":"Concert","date":"2025-07-01","location":"Palau de la Musica"}})" +
        "\n" +
        R"({"id":"n-01","source":"Note","metadata":{"title":"Trip notes"},"payload":{"kind":"text","text":"Palau de la Musica:Place | located_in | Barcelona:Place."}})" +
        "\n" +
        R"({"id":"ph-01","source":"Photos","metadata":{"date":"2025-07-02"},"payload":{"kind":"image","path":"shot.png"}})" +
        "\n";
    auto file = dir.write("k.fxt", lines);

    SchemaRegistry registry = shipped_registry();
    PersonalKnowledge pk = load_personal_knowledge(file, "alex", registry);
    REQUIRE(pk.objects.size() == 3);

    StubGateway gateway;
    Transducer t = rule_transducer(registry, &gateway);
    Pkg first = build_graph(pk, t);
    Pkg second = build_graph(pk, t);
    CHECK(first.canonical_dump() == second.canonical_dump());

    AuditReport audit = first.audit();
    CHECK(audit.reachability_violations == 0);
    CHECK(audit.problems.empty());

    // the calendar location and the note's subject unify on one entity
    std::string dump = first.canonical_dump();
    const std::string node_line = "N\tentity\tE:palau de la musica|Place\t";
    std::size_t count = 0;
    for (std::size_t at = dump.find(node_line); at != std::string::npos;
         at = dump.find(node_line, at + 1))
        ++count;
    CHECK(count == 1);
}

TEST_CASE("every produced triple names its source object as provenance") {
    SchemaRegistry registry = shipped_registry();
    Transducer t = rule_transducer(registry);
    auto note = parse_object(
        R"({"id":"n-08","source":"Note","metadata":{"title":"People"},"payload":{"kind":"text","text":"Ana | knows | Ben.\nBen | knows | Cal."}})",
        ".");
    Fragment fragment = t.lift_metadata(note);
    Fragment content = t.content_graph(note);
    for (const auto& triple : fragment.triples)
        CHECK(triple.provenance == std::set<std::string>{"n-08"});
    for (const auto& triple : content.triples)
        CHECK(triple.provenance == std::set<std::string>{"n-08"});
}
