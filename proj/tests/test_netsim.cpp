#include <catch2/catch_amalgamated.hpp>

#include "bsssqs/netsim.hpp"

using namespace bsssqs;

namespace {

struct Inbox {
    std::vector<MessageEnvelope> received;

    Simulator::Handler handler()
    {
        return [this](const MessageEnvelope& env) { received.push_back(env); };
    }
};

} // namespace

TEST_CASE("duplicate node registration is an error")
{
    Simulator sim(1);
    Inbox a;
    sim.register_node("a", a.handler());
    REQUIRE_THROWS_AS(sim.register_node("a", a.handler()), Error);
}

TEST_CASE("send to an unregistered node leaves an undeliverable record")
{
    Simulator sim(1);
    Inbox a;
    sim.register_node("a", a.handler());
    SendResult r = sim.send("a", "ghost", MsgKind::alert, to_bytes("x"));
    REQUIRE(r.disposition == Disposition::undeliverable);
    REQUIRE(sim.transcript().size() == 1);
    REQUIRE(sim.transcript()[0].disposition == Disposition::undeliverable);
    REQUIRE(sim.run_until_quiescent() == 0);
}

TEST_CASE("registered node receives the next send")
{
    Simulator sim(1);
    Inbox a;
    Inbox b;
    sim.register_node("a", a.handler());
    sim.register_node("b", b.handler());
    sim.send("a", "b", MsgKind::alert, to_bytes("hello"));
    std::uint64_t ticks = sim.run_until_quiescent();
    REQUIRE(ticks == 1);
    REQUIRE(b.received.size() == 1);
    REQUIRE(to_string(b.received[0].payload) == "hello");
}

TEST_CASE("empty network quiesces in zero ticks")
{
    Simulator sim(1);
    REQUIRE(sim.run_until_quiescent() == 0);
}

TEST_CASE("zero-delay link preserves send order per pair")
{
    Simulator sim(1);
    Inbox a;
    Inbox b;
    sim.register_node("a", a.handler());
    sim.register_node("b", b.handler());
    for (int i = 0; i < 10; ++i)
        sim.send("a", "b", MsgKind::alert, Bytes{static_cast<std::uint8_t>(i)});
    sim.run_until_quiescent();
    REQUIRE(b.received.size() == 10);
    for (int i = 0; i < 10; ++i)
        REQUIRE(b.received[i].payload[0] == i);
}

TEST_CASE("drop probability one delivers nothing but records the attempt")
{
    Simulator sim(1);
    Inbox a;
    Inbox b;
    sim.register_node("a", a.handler());
    sim.register_node("b", b.handler());
    LinkPolicy lossy;
    lossy.drop_prob = 1.0;
    sim.set_link("a", "b", lossy);
    SendResult r = sim.send("a", "b", MsgKind::alert, to_bytes("gone"));
    REQUIRE(r.disposition == Disposition::dropped);
    sim.run_until_quiescent();
    REQUIRE(b.received.empty());
    REQUIRE(sim.transcript().size() == 1);
}

TEST_CASE("link delay defers delivery")
{
    Simulator sim(1);
    Inbox a;
    Inbox b;
    sim.register_node("a", a.handler());
    sim.register_node("b", b.handler());
    LinkPolicy slow;
    slow.delay = 5;
    sim.set_link("a", "b", slow);
    std::uint64_t t0 = sim.now();
    sim.send("a", "b", MsgKind::alert, to_bytes("later"));
    sim.run_until_quiescent();
    REQUIRE(sim.now() == t0 + 6);
    REQUIRE(b.received.size() == 1);
}

TEST_CASE("eavesdropper sees the payload before tampering")
{
    Simulator sim(1);
    Inbox a;
    Inbox b;
    sim.register_node("a", a.handler());
    sim.register_node("b", b.handler());
    std::vector<MessageEnvelope> tapped;
    LinkPolicy policy;
    policy.eavesdropper = &tapped;
    policy.tamper_hook = [](const Bytes& p) {
        Bytes out = p;
        out[0] ^= 0xff;
        return out;
    };
    sim.set_link("a", "b", policy);
    sim.send("a", "b", MsgKind::alert, Bytes{0x10, 0x20});
    sim.run_until_quiescent();
    REQUIRE(tapped.size() == 1);
    REQUIRE(tapped[0].payload == Bytes{0x10, 0x20});
    REQUIRE(b.received.size() == 1);
    REQUIRE(b.received[0].payload == Bytes{0xef, 0x20});
}

TEST_CASE("duplicate probability one delivers twice, transcript records once")
{
    Simulator sim(1);
    Inbox a;
    Inbox b;
    sim.register_node("a", a.handler());
    sim.register_node("b", b.handler());
    LinkPolicy dup;
    dup.duplicate_prob = 1.0;
    sim.set_link("a", "b", dup);
    sim.send("a", "b", MsgKind::alert, to_bytes("twice"));
    sim.run_until_quiescent();
    REQUIRE(b.received.size() == 2);
    REQUIRE(sim.transcript().size() == 1);
}

TEST_CASE("fixed seed reruns produce identical transcripts")
{
    auto run = [](std::uint64_t seed) {
        Simulator sim(seed);
        Inbox a;
        Inbox b;
        sim.register_node("a", a.handler());
        sim.register_node("b", b.handler());
        LinkPolicy lossy;
        lossy.drop_prob = 0.5;
        lossy.duplicate_prob = 0.25;
        sim.set_link("a", "b", lossy);
        for (int i = 0; i < 64; ++i)
            sim.send("a", "b", MsgKind::alert, Bytes{static_cast<std::uint8_t>(i)});
        sim.run_until_quiescent();
        return sim.transcript_jsonl();
    };
    REQUIRE(run(42) == run(42));
    REQUIRE(run(42) != run(43));
}

TEST_CASE("quiescence timeout reports in-flight messages")
{
    Simulator sim(1);
    Inbox a;
    Inbox b;
    sim.register_node("a", a.handler());
    sim.register_node("b", b.handler());
    LinkPolicy slow;
    slow.delay = 1000;
    sim.set_link("a", "b", slow);
    sim.send("a", "b", MsgKind::alert, to_bytes("x"));
    REQUIRE_THROWS_AS(sim.run_until_quiescent(10), Error);
}

TEST_CASE("advance_to delivers due messages and pins the clock")
{
    Simulator sim(1);
    Inbox a;
    Inbox b;
    sim.register_node("a", a.handler());
    sim.register_node("b", b.handler());
    sim.send("a", "b", MsgKind::alert, to_bytes("x"));
    sim.advance_to(100);
    REQUIRE(sim.now() == 100);
    REQUIRE(b.received.size() == 1);
    sim.advance_to(50); // never moves backwards
    REQUIRE(sim.now() == 100);
}
