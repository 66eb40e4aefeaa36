use fovea_core::RenderMode;
use fovea_service::protocol::{FrameError, StatsPayload, TimingsMs};
use fovea_service::{
    decode_frame, encode_frame, ClientMessage, FrameCounter, FrameHeader, ServerMessage,
};
use serde_json::json;

#[test]
fn frame_header_layout_is_bit_exact() {
    let header = FrameHeader {
        width: 3,
        height: 2,
        frame_id: 0x0102_0304,
    };
    let pixels: Vec<u8> = (0..24).collect();
    let bytes = encode_frame(header, &pixels);
    let mut expect = b"FVSF".to_vec();
    expect.extend([3, 0, 0, 0, 2, 0, 0, 0, 4, 3, 2, 1]);
    expect.extend(&pixels);
    assert_eq!(bytes, expect);
    let (h, px) = decode_frame(&bytes).unwrap();
    assert_eq!(h, header);
    assert_eq!(px, &pixels[..]);
}

#[test]
fn bad_frames_are_rejected() {
    let good = encode_frame(
        FrameHeader {
            width: 2,
            height: 2,
            frame_id: 7,
        },
        &[9; 16],
    );
    assert_eq!(decode_frame(&good[..10]), Err(FrameError::Short(10)));
    let mut magic = good.clone();
    magic[0] = b'X';
    assert_eq!(decode_frame(&magic), Err(FrameError::Magic(*b"XVSF")));
    assert_eq!(
        decode_frame(&good[..good.len() - 1]),
        Err(FrameError::Length {
            expected: 16,
            actual: 15
        })
    );
}

#[test]
fn counter_shows_or_drops_every_frame() {
    let frame = |id| {
        encode_frame(
            FrameHeader {
                width: 1,
                height: 1,
                frame_id: id,
            },
            &[1, 2, 3, 255],
        )
    };
    let mut c = FrameCounter::default();
    assert!(c.accept(&frame(0)).is_some());
    assert!(c.accept(&frame(2)).is_some());
    // stale id, bad magic and truncated payload
    assert!(c.accept(&frame(1)).is_none());
    assert!(c.accept(b"JUNKJUNKJUNKJUNK").is_none());
    assert!(c.accept(&frame(3)[..18]).is_none());
    assert_eq!((c.shown, c.dropped, c.last_id), (2, 3, Some(2)));
}

#[test]
fn control_messages_use_type_and_payload() {
    let parse = |v: serde_json::Value| serde_json::from_value::<ClientMessage>(v).unwrap();
    assert_eq!(
        parse(json!({"type": "SetGaze", "payload": {"u": 10.5, "v": 4}})),
        ClientMessage::SetGaze {
            u: 10.5,
            v: 4.0,
            eye: 0
        }
    );
    assert_eq!(
        parse(json!({"type": "SetMode", "payload": {"mode": "mask_debug"}})),
        ClientMessage::SetMode {
            mode: RenderMode::MaskDebug
        }
    );
    assert_eq!(
        parse(json!({"type": "SetParam", "payload": {"name": "fovea_px", "value": 128}})),
        ClientMessage::SetParam {
            name: "fovea_px".into(),
            value: 128.0
        }
    );
    assert_eq!(parse(json!({"type": "Stats"})), ClientMessage::Stats);
    assert_eq!(
        parse(json!({"type": "RequestFrame", "payload": null})),
        ClientMessage::RequestFrame
    );

    let cam = parse(json!({"type": "SetCamera", "payload": {
        "pose": {"rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "translation": [0, 0, 2]},
        "intrinsics": {"fx": 100, "fy": 100, "cx": 80, "cy": 64},
    }}));
    match cam {
        ClientMessage::SetCamera { pose, intrinsics } => {
            assert_eq!(pose.translation.0, [0.0, 0.0, 2.0]);
            assert_eq!(intrinsics.cx, 80.0);
        }
        other => panic!("{other:?}"),
    }

    for bad in [
        json!({"type": "Nope"}),
        json!({"type": "SetGaze", "payload": {"u": 1}}),
        json!([1, 2]),
    ] {
        assert!(serde_json::from_value::<ClientMessage>(bad).is_err());
    }
}

#[test]
fn replies_serialize_with_type_and_payload() {
    let ack = serde_json::to_value(ServerMessage::Ack {
        of: "SetGaze".into(),
    })
    .unwrap();
    assert_eq!(ack, json!({"type": "Ack", "payload": {"of": "SetGaze"}}));
    let stats = ServerMessage::Stats(StatsPayload {
        frames: 2,
        mode: RenderMode::FullGs,
        gaze: [1.0, 2.0],
        fovea_px: 64.0,
        m: 0.75,
        gamma_edge: 0.2,
        last_ms: TimingsMs::default(),
        mean_ms: TimingsMs::default(),
        mask_coverage: 0.0,
    });
    let v = serde_json::to_value(&stats).unwrap();
    assert_eq!(v["type"], "Stats");
    assert_eq!(v["payload"]["mode"], "full_gs");
    assert_eq!(v["payload"]["last_ms"]["total"], 0.0);
    let back: ServerMessage = serde_json::from_value(v).unwrap();
    assert_eq!(back, stats);
}
