//! Single-player reductions: tabular MDPs, CartPole and bandits.

pub mod bandit;
pub mod cartpole;
pub mod mdp;

pub use bandit::{
    arm_player, arm_trajectory, bandit_action_policy, bandit_state_policy, induced_arm_distribution,
    induced_arm_distribution_mc, run_bandit, BanditSpec, BanditTrace, Perspective,
};
pub use cartpole::{
    cartpole_step, enumerate_controls, moving_average, play_episode, performance_target, rollout_finals, run_cartpole, softmax,
    train_value_ensemble, CartPoleConfig, CartPoleRun, CartPoleState, Episode, EpisodeMemory,
    ValueEnsemble, AVERAGE_WINDOW, EPISODE_CAP, VALUE_MAX,
};
pub use mdp::{
    bellman_check, greedy_policy, policy_iteration, q_residual, q_table, q_value, value_iteration,
    Policy, TabularMdp,
};
