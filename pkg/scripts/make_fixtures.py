#!/usr/bin/env python3
"""Regenerate the bundled desk-scale fixtures.

With ``--from-dir`` pointing at the public NSL-KDD / UNSW-NB15 files the
fixtures are stratified subsamples of the real data. Without it, records are
synthesized from per-attack-type profiles that follow the field semantics of
the public files (value ranges, categorical vocabularies, the typical
signatures of neptune, smurf, Generic, ...). The synthetic rows are only
meant to exercise the pipeline; they say nothing about real detection rates.

    python scripts/make_fixtures.py                    # synthetic
    python scripts/make_fixtures.py --from-dir ~/data  # real subsample
"""
import argparse
import hashlib
import json
from pathlib import Path

import numpy as np

from tlconvnet import ingest

OUT = Path(__file__).resolve().parents[1] / "src" / "tlconvnet" / "resources" / "fixtures"

FILES = {
    "kddtrain": "KDDTrain+_fixture.txt",
    "kddtest_plus": "KDDTest+_fixture.txt",
    "kddtest_21": "KDDTest-21_fixture.txt",
    "unsw": "UNSW_NB15_fixture.csv",
}

# name -> (normal rows, attack rows, novel share of attack rows)
SIZES = {
    "kddtrain": (500, 500, 0.0),
    "kddtest_plus": (430, 570, 0.30),
    "kddtest_21": (110, 490, 0.40),
    "unsw": (500, 500, 0.0),
}

NSL_FIELDS = ingest.builtin_layout("nslkdd").fields
UNSW_FIELDS = ingest.builtin_layout("unswnb15_partitioned").fields


def _fmt(v):
    if isinstance(v, str):
        return v
    if float(v).is_integer():
        return str(int(v))
    if abs(v) >= 1e4:
        return f"{v:.2f}"
    return f"{v:.6g}"


class Sampler:
    def __init__(self, rng):
        self.rng = rng

    def pick(self, options, p=None):
        return options[self.rng.choice(len(options), p=p)]

    def lognorm(self, mu, sigma):
        return float(np.round(self.rng.lognormal(mu, sigma)))

    def rate(self, lo, hi):
        return float(np.round(self.rng.uniform(lo, hi), 2))

    def int(self, lo, hi):
        return int(self.rng.integers(lo, hi + 1))


def nsl_record(s, kind):
    r = {f: 0 for f in NSL_FIELDS}
    r.update(
        protocol_type="tcp", service="http", flag="SF", label=kind,
        count=s.int(1, 20), srv_count=s.int(1, 20),
        same_srv_rate=s.rate(0.8, 1.0), diff_srv_rate=s.rate(0.0, 0.1),
        dst_host_count=s.int(1, 255), dst_host_srv_count=s.int(100, 255),
        dst_host_same_srv_rate=s.rate(0.7, 1.0), dst_host_diff_srv_rate=s.rate(0.0, 0.05),
        dst_host_same_src_port_rate=s.rate(0.0, 0.2), dst_host_srv_diff_host_rate=s.rate(0.0, 0.1),
        difficulty=s.int(15, 21),
    )
    if kind == "normal":
        proto = s.pick(["tcp", "udp", "icmp"], [0.8, 0.15, 0.05])
        service = {
            "tcp": s.pick(["http", "smtp", "ftp_data", "ftp", "private", "other", "ssh"], [0.5, 0.15, 0.15, 0.05, 0.05, 0.05, 0.05]),
            "udp": s.pick(["domain_u", "ntp_u", "private", "other"], [0.6, 0.2, 0.1, 0.1]),
            "icmp": s.pick(["eco_i", "ecr_i", "urp_i"]),
        }[proto]
        r.update(
            protocol_type=proto, service=service,
            flag=s.pick(["SF", "REJ", "S1", "RSTO"], [0.92, 0.04, 0.02, 0.02]),
            duration=0 if s.rng.random() < 0.85 else s.lognorm(3, 2),
            src_bytes=s.lognorm(5.5, 1.2), dst_bytes=s.lognorm(7.5, 1.5) if proto == "tcp" else s.lognorm(4, 1),
            logged_in=1 if proto == "tcp" else 0, hot=s.int(0, 2) if s.rng.random() < 0.2 else 0,
            dst_host_same_src_port_rate=s.rate(0.0, 0.1),
        )
    elif kind in ("neptune", "processtable"):
        r.update(
            service=s.pick(["private", "other", "telnet", "finger", "http", "uucp"]),
            flag=s.pick(["S0", "REJ"], [0.85, 0.15]) if kind == "neptune" else "SF",
            duration=0 if kind == "neptune" else s.lognorm(7, 1),
            count=s.int(100, 511), srv_count=s.int(1, 25),
            serror_rate=1.0, srv_serror_rate=1.0, same_srv_rate=s.rate(0.0, 0.1), diff_srv_rate=s.rate(0.05, 0.1),
            dst_host_count=255, dst_host_srv_count=s.int(1, 25), dst_host_same_srv_rate=s.rate(0.0, 0.1),
            dst_host_serror_rate=1.0, dst_host_srv_serror_rate=1.0,
        )
    elif kind in ("smurf", "pod"):
        r.update(
            protocol_type="icmp", service="ecr_i",
            src_bytes=1032 if kind == "smurf" else 1480, wrong_fragment=0 if kind == "smurf" else 1,
            count=511 if kind == "smurf" else s.int(1, 5), srv_count=511 if kind == "smurf" else s.int(1, 5),
            dst_host_count=255, dst_host_srv_count=255, dst_host_same_src_port_rate=1.0,
        )
    elif kind in ("satan", "portsweep", "nmap", "mscan", "saint", "ipsweep"):
        icmp = kind in ("ipsweep",) or (kind == "nmap" and s.rng.random() < 0.4)
        r.update(
            protocol_type="icmp" if icmp else "tcp",
            service="eco_i" if icmp else s.pick(["private", "other", "ftp", "smtp", "telnet", "finger", "domain"]),
            flag="SF" if icmp else s.pick(["REJ", "RSTR", "S0", "RSTO"]),
            src_bytes=s.int(0, 20) if icmp else 0, count=s.int(1, 5), srv_count=s.int(1, 5),
            rerror_rate=0 if icmp else s.rate(0.5, 1.0), srv_rerror_rate=0 if icmp else s.rate(0.5, 1.0),
            same_srv_rate=s.rate(0.0, 0.3), diff_srv_rate=s.rate(0.5, 1.0),
            dst_host_count=s.int(1, 255), dst_host_srv_count=s.int(1, 30),
            dst_host_same_srv_rate=s.rate(0.0, 0.2), dst_host_diff_srv_rate=s.rate(0.5, 1.0),
            dst_host_same_src_port_rate=s.rate(0.5, 1.0), dst_host_rerror_rate=s.rate(0.3, 1.0),
        )
    elif kind in ("back", "apache2", "httptunnel"):
        r.update(
            service="http", flag=s.pick(["SF", "RSTR"], [0.8, 0.2]),
            src_bytes=54540 if kind == "back" else s.lognorm(8, 1), dst_bytes=s.lognorm(8.5, 0.5),
            hot=2, logged_in=1, num_compromised=1 if kind == "back" else 0,
            count=s.int(1, 150), srv_count=s.int(1, 150), dst_host_srv_count=s.int(1, 255),
        )
    elif kind in ("guess_passwd", "ftp_write", "imap", "phf", "multihop", "snmpguess", "xterm", "sendmail"):
        udp = kind == "snmpguess"
        r.update(
            protocol_type="udp" if udp else "tcp",
            service="private" if udp else s.pick(["telnet", "ftp", "imap4", "smtp", "pop_3"]),
            flag="SF" if udp else s.pick(["RSTO", "SF"]),
            src_bytes=s.int(20, 200), dst_bytes=s.int(0, 300), num_failed_logins=0 if udp else s.int(0, 1),
            hot=s.int(0, 4), dst_host_count=s.int(1, 255), dst_host_srv_count=s.int(1, 10),
            dst_host_same_srv_rate=s.rate(0.0, 0.3),
        )
    elif kind in ("warezclient", "warezmaster", "mailbomb"):
        r.update(
            service="smtp" if kind == "mailbomb" else s.pick(["ftp_data", "ftp"]),
            src_bytes=s.lognorm(9, 1), dst_bytes=s.lognorm(3, 1), duration=s.lognorm(4, 2),
            hot=s.int(0, 28), is_guest_login=1 if kind != "mailbomb" else 0, logged_in=1,
            count=s.int(1, 300) if kind == "mailbomb" else s.int(1, 5),
        )
    elif kind in ("teardrop", "udpstorm"):
        r.update(
            protocol_type="udp", service="private", src_bytes=28, wrong_fragment=3 if kind == "teardrop" else 0,
            count=s.int(1, 100), srv_count=s.int(1, 100),
        )
    elif kind in ("snmpgetattack",):
        # indistinguishable from normal SNMP traffic in the public data
        r.update(protocol_type="udp", service="snmp", src_bytes=s.int(30, 110), dst_bytes=s.int(30, 110))
    else:  # buffer_overflow, rootkit, loadmodule, perl, ps, sqlattack, ...
        r.update(
            service=s.pick(["telnet", "ftp_data", "ftp"]), duration=s.lognorm(4, 2),
            src_bytes=s.lognorm(7, 1.5), dst_bytes=s.lognorm(8, 1.5), hot=s.int(1, 5), logged_in=1,
            root_shell=s.int(0, 1), num_file_creations=s.int(0, 3), num_shells=s.int(0, 1),
            num_root=s.int(0, 5), num_compromised=s.int(0, 3),
        )
    r["srv_serror_rate"] = r.get("srv_serror_rate", 0)
    return r


NSL_TRAIN_ATTACKS = (
    ["neptune"] * 30 + ["smurf"] * 9 + ["satan"] * 5 + ["ipsweep"] * 5 + ["portsweep"] * 5 + ["nmap"] * 3
    + ["back"] * 2 + ["teardrop"] * 2 + ["warezclient"] * 2 + ["pod", "guess_passwd", "buffer_overflow",
    "warezmaster", "land", "imap", "rootkit", "loadmodule", "ftp_write", "multihop", "phf", "perl", "spy"]
)
NSL_NOVEL_ATTACKS = [
    "apache2", "mailbomb", "processtable", "udpstorm", "snmpgetattack", "snmpguess", "named", "worm",
    "sendmail", "sqlattack", "httptunnel", "xterm", "ps", "xlock", "xsnoop", "mscan", "saint",
]
NSL_NOVEL_WEIGHTS = np.array([8, 5, 6, 1, 6, 6, 1, 1, 1, 1, 2, 1, 1, 1, 1, 9, 5], dtype=float)


def nsl_rows(s, normal, attack, novel_share, test21=False):
    kinds = ["normal"] * normal
    n_novel = int(round(novel_share * attack))
    kinds += [s.pick(NSL_TRAIN_ATTACKS) for _ in range(attack - n_novel)]
    kinds += [s.pick(NSL_NOVEL_ATTACKS, NSL_NOVEL_WEIGHTS / NSL_NOVEL_WEIGHTS.sum()) for _ in range(n_novel)]
    kinds = [kinds[i] for i in s.rng.permutation(len(kinds))]
    rows = []
    for k in kinds:
        r = nsl_record(s, k)
        if test21:
            r["difficulty"] = s.int(1, 20)
        rows.append([_fmt(r[f]) for f in NSL_FIELDS])
    return rows


UNSW_CATS = ["Generic"] * 40 + ["Exploits"] * 27 + ["Fuzzers"] * 15 + ["DoS"] * 10 + ["Reconnaissance"] * 8 + [
    "Analysis", "Backdoor", "Shellcode", "Worms"]


def unsw_record(s, cat):
    r = {f: 0 for f in UNSW_FIELDS}
    normal = cat == "Normal"
    proto = s.pick(["tcp", "udp"], [0.7, 0.3]) if normal else s.pick(["tcp", "udp", "unas", "ospf", "sctp"], [0.55, 0.3, 0.1, 0.03, 0.02])
    if cat == "Generic":
        proto = "udp"
    service = {
        True: s.pick(["-", "http", "dns", "ftp", "ftp-data", "smtp", "ssh"], [0.45, 0.15, 0.2, 0.05, 0.1, 0.03, 0.02]),
        False: s.pick(["-", "dns", "http", "ftp", "smtp", "pop3", "ssl", "snmp", "irc", "radius", "dhcp"]),
    }[normal]
    if cat == "Generic":
        service = "dns"
    state = (s.pick(["FIN", "CON", "INT", "REQ"], [0.6, 0.2, 0.15, 0.05]) if normal
             else s.pick(["INT", "FIN", "CON", "REQ", "RST", "ECO"], [0.55, 0.35, 0.04, 0.03, 0.02, 0.01]))
    spkts, dpkts = (s.int(2, 60), s.int(0, 60)) if normal else (s.int(1, 12), s.int(0, 8))
    sbytes = s.lognorm(7, 1.3) if normal else (114 if cat == "Generic" else s.lognorm(6, 1.5))
    dbytes = s.lognorm(7.5, 2) if normal and dpkts else (s.lognorm(5, 2) if dpkts else 0)
    dur = s.rate(0.0, 3.0) if normal else (0.000009 if state == "INT" else s.rate(0.0, 1.5))
    rate = 0 if dur == 0 else round((spkts + dpkts) / max(dur, 1e-6), 2)
    sttl = s.pick([31, 62, 29]) if normal else s.pick([254, 62], [0.85, 0.15])
    r.update(
        dur=dur, proto=proto, service=service, state=state, spkts=spkts, dpkts=dpkts,
        sbytes=sbytes, dbytes=dbytes, rate=min(rate, 1_000_000), sttl=sttl,
        dttl=s.pick([29, 252]) if normal else (0 if state == "INT" else 252),
        sload=round(sbytes * 8 / max(dur, 1e-6), 2) if dur else 0, dload=round(dbytes * 8 / max(dur, 1e-6), 2) if dur else 0,
        sloss=s.int(0, 5), dloss=s.int(0, 5), sinpkt=s.rate(0, 100), dinpkt=s.rate(0, 100),
        sjit=s.rate(0, 500), djit=s.rate(0, 100), swin=255 if proto == "tcp" else 0, dwin=255 if proto == "tcp" else 0,
        stcpb=s.int(0, 2**32 - 1) if proto == "tcp" else 0, dtcpb=s.int(0, 2**32 - 1) if proto == "tcp" else 0,
        tcprtt=s.rate(0, 0.2) if proto == "tcp" else 0, synack=s.rate(0, 0.1), ackdat=s.rate(0, 0.1),
        smean=int(sbytes / max(spkts, 1)), dmean=int(dbytes / max(dpkts, 1)) if dpkts else 0,
        trans_depth=int(service == "http"), response_body_len=s.lognorm(7, 2) if service == "http" else 0,
        ct_srv_src=s.int(1, 10) if normal else s.int(5, 60), ct_state_ttl=0 if normal else s.int(1, 2),
        ct_dst_ltm=s.int(1, 8) if normal else s.int(1, 40), ct_src_dport_ltm=s.int(1, 3) if normal else s.int(1, 40),
        ct_dst_sport_ltm=1 if normal else s.int(1, 30), ct_dst_src_ltm=s.int(1, 10) if normal else s.int(1, 60),
        is_ftp_login=int(service == "ftp" and s.rng.random() < 0.5), ct_ftp_cmd=int(service == "ftp"),
        ct_flw_http_mthd=int(service == "http"), ct_src_ltm=s.int(1, 8) if normal else s.int(1, 40),
        ct_srv_dst=s.int(1, 10) if normal else s.int(5, 60), is_sm_ips_ports=int(normal and s.rng.random() < 0.01),
        attack_cat=cat, label=0 if normal else 1,
    )
    return r


def unsw_rows(s, normal, attack):
    cats = ["Normal"] * normal + [s.pick(UNSW_CATS) for _ in range(attack)]
    cats = [cats[i] for i in s.rng.permutation(len(cats))]
    rows = []
    for i, c in enumerate(cats, start=1):
        r = unsw_record(s, c)
        r["id"] = i
        row = [_fmt(r[f]) for f in UNSW_FIELDS]
        # a few gaps so the patch step has something to repair
        if s.rng.random() < 0.01:
            row[UNSW_FIELDS.index("ct_flw_http_mthd")] = ""
        rows.append(row)
    return rows


def write(path, rows, header=None):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        if header:
            w.writerow(header)
        w.writerows(rows)


def synthesize(seed):
    s = Sampler(np.random.default_rng(seed))
    n, a, _ = SIZES["kddtrain"]
    write(OUT / FILES["kddtrain"], nsl_rows(s, n, a, 0.0))
    n, a, nov = SIZES["kddtest_plus"]
    write(OUT / FILES["kddtest_plus"], nsl_rows(s, n, a, nov))
    n, a, nov = SIZES["kddtest_21"]
    write(OUT / FILES["kddtest_21"], nsl_rows(s, n, a, nov, test21=True))
    n, a, _ = SIZES["unsw"]
    write(OUT / FILES["unsw"], unsw_rows(s, n, a), header=ingest.builtin_layout("unswnb15_partitioned").names)


def subsample(data_dir, seed):
    data_dir = Path(data_dir)
    nsl = ingest.builtin_layout("nslkdd")
    unsw = ingest.builtin_layout("unswnb15_partitioned")
    for key, name, variant in [
        ("kddtrain", "KDDTrain+.txt", "TrainPlus"),
        ("kddtest_plus", "KDDTest+.txt", "TestPlus"),
        ("kddtest_21", "KDDTest-21.txt", "Test21"),
    ]:
        split = ingest.load_nslkdd(data_dir / name, variant)
        normal, attack, _ = SIZES[key]
        idx = np.sort(np.concatenate([
            np.random.default_rng(seed).choice(np.flatnonzero(split.labels == 0), normal, replace=False),
            np.random.default_rng(seed + 1).choice(np.flatnonzero(split.labels == 1), attack, replace=False),
        ]))
        ingest.write_csv(split.subset(idx), OUT / FILES[key], nsl, header=False)
    split = ingest.load_unswnb15(
        [data_dir / "UNSW_NB15_training-set.csv", data_dir / "UNSW_NB15_testing-set.csv"], unsw
    )
    ingest.write_csv(ingest.make_fixture(split, SIZES["unsw"][0], seed), OUT / FILES["unsw"], unsw, header=True)


def write_manifest():
    manifest = {}
    for key, name in FILES.items():
        path = OUT / name
        if key == "unsw":
            split = ingest.load_unswnb15(path)
        else:
            split = ingest.load_nslkdd(path, {"kddtrain": "TrainPlus", "kddtest_plus": "TestPlus", "kddtest_21": "Test21"}[key])
        stats = ingest.compute_stats(split)
        manifest[name] = {
            "rows": len(split),
            "normal": stats.normal_count,
            "attack": stats.attack_count,
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--from-dir", help="directory holding the public dataset files")
    ap.add_argument("--seed", type=int, default=2019)
    args = ap.parse_args()
    OUT.mkdir(parents=True, exist_ok=True)
    if args.from_dir:
        subsample(args.from_dir, args.seed)
    else:
        synthesize(args.seed)
    for name, info in write_manifest().items():
        print(f"{name:28s} rows={info['rows']:5d} normal={info['normal']:4d} attack={info['attack']:4d}")


if __name__ == "__main__":
    main()
