#!/usr/bin/env python3
"""Generate data/reference_library.json (Hebrew/Arabic reference content).

Sentiments use the library convention: -1 escalates, +1 de-escalates.
Output is deterministic; rerun after editing the tables below.
"""
import argparse
import json
from pathlib import Path

# (hebrew, arabic, side_a, side_b, topic)
DIALOG = [
    ("שלום", "مرحبا", 0, 0, "social"),
    ("מה שלומך?", "كيف حالك؟", 0, 0, "social"),
    ("אני מבין אותך", "أنا أفهمك", 1, 1, "social"),
    ("בוא נדבר", "دعنا نتحدث", 1, 1, "social"),
    ("נוכל לחיות יחד", "يمكننا أن نعيش معا", 1, 1, "political"),
    ("זו האדמה שלנו", "هذه أرضنا", -1, -1, "political"),
    ("אתם תמיד משקרים", "أنتم تكذبون دائما", -1, -1, "political"),
    ("לכו מכאן", "اذهبوا من هنا", -1, -1, "political"),
    ("אני מפחד", "أنا خائف", 0, 0, "social"),
    ("תודה רבה", "شكرا جزيلا", 1, 1, "social"),
    ("אני לא סומך עליך", "أنا لا أثق بك", -1, -1, "social"),
    ("גם לנו יש זכויות", "لنا أيضا حقوق", 0, -1, "political"),
    ("אנחנו רק רוצים ביטחון", "نحن نريد الأمن فقط", -1, 0, "political"),
    ("בוא נשתה קפה", "تعال نشرب القهوة", 1, 1, "social"),
    ("אני עייף", "أنا متعب", 0, 0, "social"),
    ("זה לא הוגן", "هذا ليس عدلا", -1, -1, "political"),
    ("מה אתה רוצה?", "ماذا تريد؟", 0, 0, "social"),
    ("סליחה", "آسف", 1, 1, "social"),
    ("הילדים שלנו משחקים יחד", "أولادنا يلعبون معا", 1, 1, "social"),
    ("אתם אשמים בהכל", "أنتم المذنبون في كل شيء", -1, -1, "political"),
    ("המחסום הזה משפיל", "هذا الحاجز مهين", 0, -1, "political"),
    ("הטילים מפחידים אותנו", "الصواريخ تخيفنا", -1, 0, "political"),
    ("אני רוצה לעבוד בשקט", "أريد أن أعمل بهدوء", 0, 0, "social"),
    ("הכבוד שלנו חשוב", "كرامتنا مهمة", 0, -1, "political"),
    ("נמאס לי מהמלחמה", "سئمت من الحرب", 1, 1, "political"),
    ("תקשיב לי רגע", "اسمعني لحظة", 0, 0, "social"),
    ("אני לא אוותר", "لن أستسلم", -1, -1, "political"),
    ("אולי נמצא פתרון", "ربما نجد حلا", 1, 1, "political"),
    ("זה הבית של סבא שלי", "هذا بيت جدي", -1, -1, "political"),
    ("בוא נאכל יחד", "تعال نأكل معا", 1, 1, "social"),
    ("אני כועס מאוד", "أنا غاضب جدا", -1, -1, "social"),
    ("מה דעתך?", "ما رأيك؟", 1, 1, "social"),
    ("הצבא מגן עלינו", "الجيش يحمينا", -1, 0, "political"),
    ("אנחנו סובלים כל יום", "نحن نعاني كل يوم", 0, -1, "political"),
    ("יום טוב", "يوما سعيدا", 0, 0, "social"),
    ("אתה צודק בזה", "أنت محق في هذا", 1, 1, "social"),
    ("אין לנו על מה לדבר", "ليس لدينا ما نتحدث عنه", -1, -1, "social"),
    ("גם אני הורה", "أنا أيضا أب", 1, 1, "social"),
    ("הזמן עובר מהר", "الوقت يمر بسرعة", 0, 0, "social"),
    ("תעזוב אותי", "اتركني", -1, -1, "social"),
]

# Narration = subject + predicate; the predicate carries the sentiment.
SUBJECTS = [
    ("הילד", "الولد"),
    ("הזקן", "الرجل العجوز"),
    ("החייל", "الجندي"),
    ("המורה", "المعلم"),
    ("השכן", "الجار"),
    ("השוטר", "الشرطي"),
    ("הנהג", "السائق"),
    ("הרופא", "الطبيب"),
    ("הסטודנט", "الطالب"),
]

PREDICATES = [
    ("הלך לשוק", "ذهب إلى السوق", 0, 0, "social"),
    ("זרק אבן", "رمى حجرا", -1, -1, "political"),
    ("הושיט יד", "مدّ يده", 1, 1, "social"),
    ("צעק בכעס", "صرخ بغضب", -1, -1, "social"),
    ("חייך", "ابتسم", 1, 1, "social"),
    ("הניף דגל", "رفع علما", -1, -1, "political"),
    ("עבד בשדה", "عمل في الحقل", 0, 0, "social"),
    ("שתה קפה", "شرب القهوة", 0, 0, "social"),
    ("הזמין את כולם לארוחה", "دعا الجميع إلى الطعام", 1, 1, "social"),
    ("סגר את המחסום", "أغلق الحاجز", 0, -1, "political"),
    ("הפעיל אזעקה", "أطلق صفارة الإنذار", -1, 0, "political"),
    ("חיכה בתור", "انتظر في الطابور", 0, 0, "social"),
    ("פתח את השער", "فتح البوابة", 1, 1, "political"),
]

BACKGROUNDS = [
    # (name, valence)
    ("market", "neutral"), ("checkpoint", "negative"), ("olive_grove", "positive"),
    ("bus_station", "neutral"), ("separation_wall", "negative"), ("beach", "positive"),
    ("old_city", "neutral"), ("ruined_house", "negative"), ("playground", "positive"),
    ("university", "neutral"), ("military_base", "negative"), ("wedding_hall", "positive"),
    ("street", "neutral"), ("burning_tires", "negative"), ("cafe", "positive"),
    ("hospital", "neutral"), ("demonstration", "negative"), ("park", "positive"),
    ("school", "neutral"), ("border_fence", "negative"), ("family_dinner", "positive"),
    ("office", "neutral"), ("watchtower", "negative"), ("football_field", "positive"),
    ("supermarket", "neutral"), ("roadblock", "negative"), ("garden", "positive"),
    ("train", "neutral"), ("shelter", "negative"), ("festival", "positive"),
    ("village", "neutral"), ("settlement", "negative"), ("hilltop_view", "positive"),
]

POSTURES = ["standing", "sitting", "walking", "running", "pointing", "arms_crossed", "waving"]
FACIAL = ["neutral", "happy", "angry", "sad", "afraid"]
FIGURES = ["man", "woman", "boy", "girl"]

OBJECTS = [
    "coffee_cup", "stone", "flag", "ball", "bread", "olive_branch", "phone", "car", "bicycle", "key", "book",
    "guitar", "newspaper", "umbrella", "suitcase", "chair", "table", "tree", "kite", "watermelon", "candle", "gate",
]

MESSAGES = [
    ("FOSTER_ESCALATION", "foster_1", "both",
     "ספרו לנו מה כל צד מרגיש בסיפור. אילו ביטויים מבטאים את נקודת המבט שלכם?",
     "أخبرونا بما يشعر به كل طرف في القصة. ما العبارات التي تعبر عن وجهة نظركم؟"),
    ("FOSTER_ESCALATION", "foster_2", "both",
     "נסו לבחור ביטויים שמראים בבירור את עמדתכם.",
     "حاولوا اختيار عبارات تُظهر موقفكم بوضوح."),
    ("INITIATE_DEESCALATION", "deescalate_1", "both",
     "איך הדמויות יכולות להתחיל לפתור את המחלוקת?",
     "كيف يمكن للشخصيات أن تبدأ بحل الخلاف؟"),
    ("INITIATE_DEESCALATION", "deescalate_2", "both",
     "מה יכול לקרות בהמשך כדי שהמצב יירגע?",
     "ماذا يمكن أن يحدث بعد ذلك لكي يهدأ الوضع؟"),
    ("VIEWPOINT", "viewpoint_1", "one_participant",
     "איך הדמות הזאת רואה את מה שקרה?",
     "كيف ترى هذه الشخصية ما حدث؟"),
    ("VIEWPOINT", "viewpoint_2", "one_participant",
     "נסו לחשוב על נקודת המבט של הצד השני.",
     "حاولوا التفكير في وجهة نظر الطرف الآخر."),
    ("BALANCE", "balance_1", "one_participant",
     "נשמח לשמוע גם את הרעיונות שלך לסיפור.",
     "يسعدنا أن نسمع أفكارك للقصة أيضا."),
    ("BALANCE", "balance_2", "one_participant",
     "מה לדעתך צריך לקרות עכשיו בסיפור?",
     "ما الذي يجب أن يحدث الآن في القصة برأيك؟"),
]


def build():
    expressions = []

    def add(he, ar, sa, sb, topic, kind):
        expressions.append({
            "id": f"expr_{len(expressions) + 1}",
            "text": {"he": he, "ar": ar},
            "sentiment": {"side_a": sa, "side_b": sb},
            "topic": topic,
            "statement_kind": kind,
        })

    for he, ar, sa, sb, topic in DIALOG:
        add(he, ar, sa, sb, topic, "dialog")
    for subj_he, subj_ar in SUBJECTS:
        for pred_he, pred_ar, sa, sb, topic in PREDICATES:
            add(f"{subj_he} {pred_he}", f"{subj_ar} {pred_ar}", sa, sb, topic, "narration")

    return {
        "schema_version": 1,
        "languages": {"side_a": "he", "side_b": "ar"},
        "postures": POSTURES,
        "facial_expressions": FACIAL,
        "backgrounds": [
            {"id": f"bg_{name}", "image": f"images/backgrounds/{name}.png", "valence": valence}
            for name, valence in BACKGROUNDS
        ],
        "characters": [
            {"id": f"char_{fig}_{posture}", "figure": fig, "posture": posture, "facial_expression": "neutral",
             "image": f"images/characters/{fig}_{posture}.png"}
            for fig in FIGURES for posture in POSTURES
        ],
        "objects": [{"id": f"obj_{name}", "image": f"images/objects/{name}.png"} for name in OBJECTS],
        "expressions": expressions,
        "mediator_messages": [
            {"kind": kind, "variant_id": vid, "addressee": addressee, "text": {"he": he, "ar": ar}}
            for kind, vid, addressee, he, ar in MESSAGES
        ],
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "reference_library.json"))
    args = parser.parse_args()
    lib = build()
    assert len(lib["expressions"]) == 157, len(lib["expressions"])
    assert len(lib["backgrounds"]) == 33
    assert len(lib["objects"]) == 22
    Path(args.out).write_text(json.dumps(lib, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
