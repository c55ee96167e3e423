// Bundled demo session: the mixture study's second stage (32 trials,
// 3-in-a-row from the 80% mixture), as an exported service event log.
// The annotation line marks the study's published quantile estimate.

export const STAGE2_EVENTS: string = "{\"at\": 1700000000.0, \"config\": {\"estimation\": {\"ci\": \"poisson\", \"percentiles\": [0.025, 0.975], \"target\": 0.2}, \"grid\": {\"boundary\": \"reflecting\", \"levels\": [50.0, 60.0, 70.0, 80.0, 90.0, 100.0]}, \"n\": 32, \"policy\": {\"k\": 3, \"kind\": \"kr\", \"orientation\": \"below\"}, \"seed\": 1, \"start_level\": 4}, \"type\": \"created\"}\n{\"at\": 1700000000.0, \"response\": \"yes\", \"trial\": 1, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 2, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"yes\", \"trial\": 3, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 4, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 5, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 6, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 7, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 8, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 9, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 10, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 11, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"yes\", \"trial\": 12, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 13, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 14, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"yes\", \"trial\": 15, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 16, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 17, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 18, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 19, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"yes\", \"trial\": 20, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 21, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 22, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 23, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 24, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"yes\", \"trial\": 25, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 26, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 27, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 28, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 29, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 30, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 31, \"type\": \"response\"}\n{\"at\": 1700000000.0, \"response\": \"no\", \"trial\": 32, \"type\": \"response\"}\n";

export const STAGE2_TARGET_TREATMENT = 67.5;
