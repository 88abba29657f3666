"""Shared fixture data for the tests."""

# per-class counts after cleaning, with BENIGN already cut to 700,000, and the
# published training/testing columns for the same classes
PUBLISHED_SPLIT = {
    "BENIGN": (700000, 559999, 140001),
    "DoS Hulk": (230124, 184099, 46025),
    "PortScan": (158804, 127043, 31761),
    "DDoS": (128025, 102420, 25605),
    "DoS GoldenEye": (10293, 8234, 2059),
    "FTP Patator": (7935, 6348, 1587),
    "SSH Patator": (5897, 4717, 1180),
    "DoS slowloris": (5796, 4637, 1159),
    "DoS Slowhttptest": (5499, 4399, 1100),
    "Bot": (1956, 1565, 391),
    "Web_Attack Brute Force": (1507, 1206, 301),
    "Web_Attack XSS": (652, 522, 130),
    "Infiltration": (36, 29, 7),
    "Web_Attack Sql Injection": (21, 17, 4),
    "Heartbleed": (11, 9, 2),
}

# raw and cleaned counts for the classes whose cleaning dropped records
PUBLISHED_CLEANING = {"BENIGN": (2271781, 2271320), "DDoS": (128027, 128025),
                    "FTP Patator": (7938, 7935)}

FLOW_CSV = """\
 Flow Duration, Total Fwd Packets, Flow Bytes/s, Label
10,2,100.5,BENIGN
20,3,Infinity,DDoS
30,4,NaN,BENIGN
40,5,7.25,PortScan
"""
