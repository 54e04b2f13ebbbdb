"""Impact-aware MPC for multirotor landing on a heaving deck."""
