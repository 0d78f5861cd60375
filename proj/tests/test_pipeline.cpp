#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "taclink/pipeline.hpp"

using namespace taclink;
using namespace taclink::pipeline;

namespace {

SessionKey test_key() { return SessionKey::from_hex("000102030405060708090a0b0c0d0e0f", 0x1122334455667788ULL); }

AudioFrame frame_with(std::uint16_t seq, std::vector<std::uint8_t> payload) {
  AudioFrame f;
  f.seq = seq;
  f.duration_ms = 40;
  f.payload = std::move(payload);
  f.payload_bits = static_cast<std::uint32_t>(f.payload.size() * 8);
  return f;
}

PacketErrc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const PacketError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no PacketError thrown";
  return PacketErrc::payload_too_large;
}

}  // namespace

TEST(Vox, SilenceNeverOpens) {
  const std::vector<double> e(100, 0.0);
  const auto g = vox_gate(e, VoxConfig{}, 10);
  EXPECT_EQ(std::count(g.begin(), g.end(), true), 0);
}

TEST(Vox, ThresholdIsInclusive) {
  const std::vector<double> e(50, 0.1);
  const auto g = vox_gate(e, VoxConfig{0.1, 200}, 10);
  EXPECT_EQ(std::count(g.begin(), g.end(), true), 50);
}

TEST(Vox, BurstPlusHangover) {
  // 100 ms of speech at 10 ms per sample, then silence.
  std::vector<double> e(100, 0.0);
  std::fill(e.begin() + 10, e.begin() + 20, 0.5);
  const auto g = vox_gate(e, VoxConfig{0.1, 200}, 10);
  EXPECT_EQ(std::count(g.begin(), g.end(), true), 30);
  EXPECT_FALSE(g[9]);
  EXPECT_TRUE(g[10]);
  EXPECT_TRUE(g[39]);
  EXPECT_FALSE(g[40]);
}

TEST(Vox, GapShorterThanHangoverStaysOpen) {
  std::vector<double> e(60, 0.0);
  e[5] = e[20] = 1.0;
  const auto g = vox_gate(e, VoxConfig{0.1, 200}, 10);
  for (int i = 5; i <= 40; ++i) EXPECT_TRUE(g[i]) << i;
  EXPECT_FALSE(g[41]);
}

TEST(Vox, RejectsBadConfig) {
  const std::vector<double> e(4, 0.0);
  EXPECT_THROW(vox_gate(e, VoxConfig{0.0, 200}, 10), ConfigError);
  EXPECT_THROW(vox_gate(e, VoxConfig{1.0, 200}, 10), ConfigError);
  EXPECT_THROW(vox_gate(e, VoxConfig{0.1, -1}, 10), ConfigError);
  EXPECT_THROW(vox_gate(e, VoxConfig{}, 0), DomainError);
}

TEST(Codec, FramePayloadSizes) {
  EXPECT_EQ(frame_payload_bytes(2400, 40), 12u);
  EXPECT_EQ(frame_payload_bytes(1200, 40), 6u);
  EXPECT_EQ(frame_payload_bytes(2000, 40), 10u);
  EXPECT_EQ(frame_payload_bytes(700, 40), 4u);  // 3.5 bytes rounds up
}

TEST(Codec, EncodeIsDeterministicAndSized) {
  const std::vector<double> w(4, 0.3);
  const auto a = encode_frame(w, 5, CodecProfile{});
  const auto b = encode_frame(w, 5, CodecProfile{});
  EXPECT_EQ(a.payload, b.payload);
  EXPECT_EQ(a.payload.size(), 12u);
  EXPECT_EQ(a.payload_bits, 96u);
  EXPECT_DOUBLE_EQ(a.pcm_energy, 0.3);
  EXPECT_DOUBLE_EQ(a.encode_delay_ms, 25.0);
  EXPECT_NE(encode_frame(w, 6, CodecProfile{}).payload, a.payload);
}

TEST(Nonce, Layout) {
  const auto n = make_nonce(0x0102030405060708ULL, 0xABCD);
  const Nonce expected = {1, 2, 3, 4, 5, 6, 7, 8, 0, 0, 0xAB, 0xCD};
  EXPECT_EQ(n, expected);
}

TEST(Key, HexParsing) {
  const auto k = test_key();
  for (int i = 0; i < 16; ++i) EXPECT_EQ(k.key[i], i);
  EXPECT_THROW(SessionKey::from_hex("00"), ConfigError);
  EXPECT_THROW(SessionKey::from_hex("zz0102030405060708090a0b0c0d0e0f"), ConfigError);
}

TEST(Packet, RoundTripEveryLength) {
  std::mt19937 gen(17);
  const auto key = test_key();
  for (std::size_t len = 0; len <= kMaxCiphertextBytes; ++len) {
    std::vector<std::uint8_t> payload(len);
    for (auto& b : payload) b = static_cast<std::uint8_t>(gen());
    const auto pkt = encrypt_packet(frame_with(static_cast<std::uint16_t>(len), payload), key);
    const auto wire = serialize(pkt);
    ASSERT_EQ(wire.size(), len + 18);
    const auto back = parse(wire);
    ASSERT_EQ(back, pkt);
    ASSERT_EQ(decrypt_packet(back, key).payload, payload) << len;
  }
}

TEST(Packet, CiphertextMatchesOpenSslCtr) {
  const auto key = test_key();
  std::vector<std::uint8_t> payload(40);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<std::uint8_t>(i);
  const auto pkt = encrypt_packet(frame_with(0x0203, payload), key);
  std::uint8_t iv[16] = {};
  std::copy(pkt.nonce.begin(), pkt.nonce.end(), iv);
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  EVP_EncryptInit_ex(ctx, EVP_aes_128_ctr(), nullptr, key.key.data(), iv);
  std::vector<std::uint8_t> ref(payload.size());
  int n = 0;
  EVP_EncryptUpdate(ctx, ref.data(), &n, payload.data(), static_cast<int>(payload.size()));
  EVP_CIPHER_CTX_free(ctx);
  EXPECT_EQ(pkt.ciphertext, ref);
}

TEST(Packet, EmptyPayloadIsEighteenBytes) {
  const auto wire = serialize(encrypt_packet(frame_with(0, {}), test_key()));
  ASSERT_EQ(wire.size(), 18u);
  EXPECT_EQ(wire[0], 0x13);
  EXPECT_EQ(wire[1], 0);
}

TEST(Packet, OverheadIsConstant) {
  const auto key = test_key();
  for (std::size_t len : {0u, 1u, 12u, 100u, 237u})
    EXPECT_EQ(serialize(encrypt_packet(frame_with(1, std::vector<std::uint8_t>(len)), key)).size() - len, 18u);
}

TEST(Packet, RejectsWrongVersion) {
  auto wire = serialize(encrypt_packet(frame_with(3, {1, 2, 3}), test_key()));
  for (std::uint8_t v : {0, 2, 15}) {
    auto w = wire;
    w[0] = static_cast<std::uint8_t>(v << 4 | (w[0] & 0x0F));
    EXPECT_EQ(code_of([&] { parse(w); }), PacketErrc::bad_version);
  }
}

TEST(Packet, RejectsTruncationAndPadding) {
  const auto wire = serialize(encrypt_packet(frame_with(3, std::vector<std::uint8_t>(12, 7)), test_key()));
  for (std::size_t cut = 0; cut < wire.size(); ++cut) {
    const std::vector<std::uint8_t> w(wire.begin(), wire.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_EQ(code_of([&] { parse(w); }), PacketErrc::length_malformed) << cut;
  }
  auto longer = wire;
  longer.push_back(0);
  EXPECT_EQ(code_of([&] { parse(longer); }), PacketErrc::length_malformed);
}

TEST(Packet, AnyCorruptedBitFailsCrc) {
  const auto key = test_key();
  const auto wire = serialize(encrypt_packet(frame_with(9, std::vector<std::uint8_t>(12, 0x5A)), key));
  // Skip the version nibble and length byte, which fail structurally first.
  for (std::size_t bit = 4; bit < wire.size() * 8; ++bit) {
    if (bit / 8 == 1) continue;
    auto w = wire;
    w[bit / 8] ^= static_cast<std::uint8_t>(0x80u >> (bit % 8));
    EXPECT_EQ(code_of([&] { decrypt_packet(parse(w), key); }), PacketErrc::crc_mismatch) << bit;
  }
}

TEST(Packet, OversizedPayloadRejected) {
  EXPECT_EQ(code_of([&] { encrypt_packet(frame_with(0, std::vector<std::uint8_t>(238)), test_key()); }),
            PacketErrc::payload_too_large);
}

TEST(Session, DetectsNonceReuseAtWrap) {
  Session s(test_key());
  for (std::uint32_t i = 0; i < 65536; ++i) s.encrypt(frame_with(static_cast<std::uint16_t>(i), {1}));
  EXPECT_EQ(s.packets_sealed(), 65536u);
  EXPECT_EQ(code_of([&] { s.encrypt(frame_with(0, {1})); }), PacketErrc::nonce_reuse);
}

TEST(Session, MatchesStatelessEncryption) {
  Session s(test_key());
  const auto f = frame_with(42, {9, 8, 7, 6});
  EXPECT_EQ(s.encrypt(f), encrypt_packet(f, test_key()));
}

TEST(Pipeline, EndToEndIdentity) {
  const auto key = test_key();
  const CodecProfile codec;
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u(0, 1);
  Session tx(key);
  for (std::uint16_t seq = 0; seq < 500; ++seq) {
    std::vector<double> window(4);
    for (auto& v : window) v = u(gen);
    const auto frame = encode_frame(window, seq, codec);
    const auto got = decrypt_packet(parse(serialize(tx.encrypt(frame))), key, codec);
    ASSERT_EQ(got.payload, frame.payload);
    ASSERT_EQ(got.seq, seq);
    ASSERT_DOUBLE_EQ(got.decode_delay_ms, 17.0);
  }
}

TEST(Pipeline, WrongKeyGarbles) {
  const auto f = frame_with(1, std::vector<std::uint8_t>(12, 0xAA));
  const auto pkt = encrypt_packet(f, test_key());
  const auto other = SessionKey::from_hex("ffeeddccbbaa99887766554433221100", 0x1122334455667788ULL);
  EXPECT_NE(decrypt_packet(pkt, other).payload, f.payload);
}
