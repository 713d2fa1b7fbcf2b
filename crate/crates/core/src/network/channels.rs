use std::any::Any;

use super::Message;
use crate::channels::{fiber_delay, fiber_propagate, freespace_propagate, FiberProperties, FiberState, FreeSpaceProperties};
use crate::kernel::{Channel, RngStream, SimTime, Transmission};
use crate::pulse::OpticalMessage;

/// Fiber link. Non-optical messages only see the delay.
pub struct FiberChannel {
    props: FiberProperties,
    state: FiberState,
    rng: RngStream,
    delay: SimTime,
}

impl FiberChannel {
    pub fn new(props: FiberProperties, rng: RngStream) -> Self {
        let delay = SimTime::from_secs_f64(fiber_delay(&props));
        FiberChannel {
            props,
            state: FiberState::default(),
            rng,
            delay,
        }
    }

    pub fn props(&self) -> &FiberProperties {
        &self.props
    }

    pub fn state(&self) -> FiberState {
        self.state
    }
}

impl Channel<Message> for FiberChannel {
    fn propagate(&mut self, msg: Message, send_time: SimTime) -> Option<Transmission<Message>> {
        match msg {
            Message::Optical(OpticalMessage { pulse, origin, pulse_id }) => {
                let (pulse, arrival) = fiber_propagate(&self.props, &mut self.state, pulse, send_time, &mut self.rng);
                (!pulse.is_vacuum()).then(|| Transmission {
                    msg: Message::Optical(OpticalMessage { pulse, origin, pulse_id }),
                    delay: arrival - send_time,
                })
            }
            other => Some(Transmission {
                msg: other,
                delay: self.delay,
            }),
        }
    }

    fn nominal_delay(&self) -> SimTime {
        self.delay
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub struct FreeSpaceChannel {
    props: FreeSpaceProperties,
    rng: RngStream,
}

impl FreeSpaceChannel {
    pub fn new(props: FreeSpaceProperties, rng: RngStream) -> Self {
        FreeSpaceChannel { props, rng }
    }
}

impl Channel<Message> for FreeSpaceChannel {
    fn propagate(&mut self, msg: Message, send_time: SimTime) -> Option<Transmission<Message>> {
        match msg {
            Message::Optical(OpticalMessage { pulse, origin, pulse_id }) => {
                let (pulse, arrival) = freespace_propagate(&self.props, pulse, send_time, &mut self.rng);
                (!pulse.is_vacuum()).then(|| Transmission {
                    msg: Message::Optical(OpticalMessage { pulse, origin, pulse_id }),
                    delay: arrival - send_time,
                })
            }
            other => Some(Transmission {
                msg: other,
                delay: self.nominal_delay(),
            }),
        }
    }

    fn nominal_delay(&self) -> SimTime {
        SimTime::from_secs_f64(self.props.delay_s)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Authenticated, lossless public channel with a fixed delay.
pub struct ClassicalChannel {
    delay: SimTime,
    pub carried: u64,
}

impl ClassicalChannel {
    pub fn new(delay_s: f64) -> Self {
        ClassicalChannel {
            delay: SimTime::from_secs_f64(delay_s),
            carried: 0,
        }
    }
}

impl Channel<Message> for ClassicalChannel {
    fn propagate(&mut self, msg: Message, _send_time: SimTime) -> Option<Transmission<Message>> {
        self.carried += 1;
        Some(Transmission {
            msg,
            delay: self.delay,
        })
    }

    fn nominal_delay(&self) -> SimTime {
        self.delay
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
