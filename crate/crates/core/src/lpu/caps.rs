use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static feature descriptor of a logical processing unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpuCapabilities {
    pub name: String,
    pub supports_cb_interface: bool,
    pub supports_tb_interface: bool,
    /// The device refuses single-CB transport blocks on the CB interface.
    pub tb_required_when_single_cb: bool,
    pub internal_harq_memory: bool,
    pub num_queues: usize,
    pub rated_dl_gbps: f64,
    pub rated_ul_gbps: f64,
}

impl LpuCapabilities {
    pub fn validate(&self) -> Result<()> {
        if !self.supports_cb_interface && !self.supports_tb_interface {
            return Err(Error::InvalidConfig(format!("{}: no coding interface", self.name)));
        }
        if self.tb_required_when_single_cb && !self.supports_tb_interface {
            return Err(Error::InvalidConfig(format!(
                "{}: TB interface required for single-CB blocks but not supported",
                self.name
            )));
        }
        if self.num_queues == 0 {
            return Err(Error::InvalidConfig(format!("{}: zero queues", self.name)));
        }
        Ok(())
    }
}

/// Identifiers accepted by [`discover`].
pub const KNOWN_BACKENDS: [&str; 4] = ["t2", "acc100", "vran_boost", "software"];

/// Capability descriptor of a registered backend.
///
/// ACC100 shares vRAN Boost's interface flags but keeps HARQ data in device
/// memory; its rated throughput and queue count are copied from the T2
/// profile since no figures are published for it here.
pub fn discover(backend_id: &str) -> Result<LpuCapabilities> {
    let caps = match backend_id {
        "t2" => LpuCapabilities {
            name: "t2".into(),
            supports_cb_interface: true,
            supports_tb_interface: false,
            tb_required_when_single_cb: false,
            internal_harq_memory: true,
            num_queues: 16,
            rated_dl_gbps: 35.0,
            rated_ul_gbps: 12.0,
        },
        "acc100" => LpuCapabilities {
            name: "acc100".into(),
            supports_cb_interface: true,
            supports_tb_interface: true,
            tb_required_when_single_cb: true,
            internal_harq_memory: true,
            num_queues: 16,
            rated_dl_gbps: 35.0,
            rated_ul_gbps: 12.0,
        },
        "vran_boost" => LpuCapabilities {
            name: "vran_boost".into(),
            supports_cb_interface: true,
            supports_tb_interface: true,
            tb_required_when_single_cb: true,
            internal_harq_memory: false,
            num_queues: 16,
            rated_dl_gbps: 35.0,
            rated_ul_gbps: 12.0,
        },
        "software" => LpuCapabilities {
            name: "software".into(),
            supports_cb_interface: true,
            supports_tb_interface: true,
            tb_required_when_single_cb: false,
            internal_harq_memory: false,
            num_queues: 64,
            rated_dl_gbps: 0.0,
            rated_ul_gbps: 0.0,
        },
        other => return Err(Error::UnknownBackend(other.to_string())),
    };
    Ok(caps)
}

/// Granularity of a coding operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Granularity {
    Cb,
    Tb,
}

/// Interface used for a transport block of `num_cbs_in_tb` code blocks.
/// The CB interface is preferred whenever it is allowed.
pub fn route_interface(caps: &LpuCapabilities, num_cbs_in_tb: usize) -> Result<Granularity> {
    if num_cbs_in_tb == 0 {
        return Err(Error::InvalidConfig("transport block without code blocks".into()));
    }
    if num_cbs_in_tb == 1 && caps.tb_required_when_single_cb {
        return if caps.supports_tb_interface {
            Ok(Granularity::Tb)
        } else {
            Err(Error::CapabilityMismatch(format!("{}: single-CB block needs the TB interface", caps.name)))
        };
    }
    if caps.supports_cb_interface {
        Ok(Granularity::Cb)
    } else if caps.supports_tb_interface {
        Ok(Granularity::Tb)
    } else {
        Err(Error::CapabilityMismatch(format!("{}: no interface for {num_cbs_in_tb} code blocks", caps.name)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_profiles_are_valid() {
        for id in KNOWN_BACKENDS {
            discover(id).unwrap().validate().unwrap();
        }
        assert!(matches!(discover("fpga9000"), Err(Error::UnknownBackend(_))));
    }

    #[test]
    fn routing_examples() {
        let t2 = discover("t2").unwrap();
        let vb = discover("vran_boost").unwrap();
        assert_eq!(route_interface(&t2, 1).unwrap(), Granularity::Cb);
        assert_eq!(route_interface(&vb, 1).unwrap(), Granularity::Tb);
        assert_eq!(route_interface(&vb, 26).unwrap(), Granularity::Cb);
        assert!(route_interface(&t2, 0).is_err());
    }

    #[test]
    fn tb_only_device_routes_everything_to_tb() {
        let caps = LpuCapabilities { supports_cb_interface: false, ..discover("vran_boost").unwrap() };
        assert_eq!(route_interface(&caps, 40).unwrap(), Granularity::Tb);
    }
}
