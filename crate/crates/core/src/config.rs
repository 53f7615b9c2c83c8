//! Robot configuration file: geometry plus optional per-axis drive settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::axis::{AxesConfig, AxisParams};
use crate::kinematics::{CarriagePose, RobotParams};
use crate::planner::Robot;

/// `{"z_u_mm": ..., "z_l_mm": ..., "travel_x_mm": ..., "travel_y_mm": ...,
/// "max_incline_deg": ..., "axes": {...}}`
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotConfig {
    #[serde(flatten)]
    pub robot: RobotParams,
    #[serde(default)]
    pub axes: AxesConfig,
}

impl RobotConfig {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        let cfg: RobotConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.robot.validate()?;
        self.axes.build(&self.robot)?;
        Ok(())
    }

    pub fn axis_params(&self) -> crate::Result<[AxisParams; 4]> {
        Ok(self.axes.build(&self.robot)?)
    }

    /// Simulated robot resting at `pose`.
    pub fn robot_at(&self, pose: &CarriagePose) -> crate::Result<Robot> {
        Ok(Robot::new(self.robot, self.axis_params()?, pose))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_only_config_uses_default_axes() {
        let text = r#"{"z_u_mm": -36.5, "z_l_mm": -82.2, "travel_x_mm": 55, "travel_y_mm": 30, "max_incline_deg": 30}"#;
        let cfg = RobotConfig::from_json(text).unwrap();
        assert_eq!(cfg, RobotConfig::default());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RobotConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RobotConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_geometry() {
        let text = r#"{"z_u_mm": -90, "z_l_mm": -82.2, "travel_x_mm": 55, "travel_y_mm": 30, "max_incline_deg": 30}"#;
        assert_eq!(RobotConfig::from_json(text).unwrap_err().kind(), "InvalidParams");
    }
}
