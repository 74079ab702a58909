//! Signed broadcast with random delay, and what the channel refuses.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tumbler::channel::{Channel, MessageKind, SignedMessage};
use tumbler::groupcrypto::{derive_sig_keypair, keygen, KeyPair};
use tumbler::onion::order_participants;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let channel_id = [9u8; 32];
    let keys: Vec<KeyPair> = (0..3).map(|_| keygen(&mut rng)).collect();
    let pks: Vec<_> = keys.iter().map(|k| k.pk.clone()).collect();
    let order = order_participants(&pks, &channel_id).unwrap();
    let key_at = |pos: u16| {
        let pk = &order.entry(pos).unwrap().pk_enc;
        keys.iter().find(|k| &k.pk == pk).unwrap().clone()
    };
    let sig_sk = |pos: u16| derive_sig_keypair(&channel_id, &key_at(pos)).sk;

    let mut ch = Channel::new(4, 3);
    ch.register(channel_id, 1, order.clone(), vec![0, 1, 2]);
    for pos in 1..=3u16 {
        let pk = order.entry(pos).unwrap().pk_enc.to_bytes();
        // Announcements are signed with the encryption key itself.
        let msg = SignedMessage::new(
            &key_at(pos).sk,
            channel_id,
            1,
            pos,
            MessageKind::AnnouncePk,
            pk,
        );
        ch.broadcast(msg).unwrap();
    }
    // Position 2 signing as position 1 is refused.
    let forged = SignedMessage::new(&sig_sk(2), channel_id, 1, 1, MessageKind::SigTag, vec![1]);
    println!("forged post: {:?}", ch.broadcast(forged));

    // A second, different post in a used slot is kept as proof of equivocation.
    for tag in [vec![1], vec![2]] {
        let m = SignedMessage::new(&sig_sk(3), channel_id, 1, 3, MessageKind::SigTag, tag);
        ch.broadcast(m).unwrap();
    }
    println!("equivocations recorded: {}", ch.equivocations().count());

    while !ch.is_idle() {
        for (to, m) in ch.tick() {
            println!(
                "tick {}: to {to} from position {} {:?}",
                ch.now(),
                m.sender_position,
                m.kind
            );
        }
    }
    print!("{}", ch.export_jsonl());
}
